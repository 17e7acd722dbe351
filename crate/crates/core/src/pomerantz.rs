//! The seventeen base/composite sets of the first experiment and the human
//! configural-effect data they are compared with.
//!
//! Set ids follow the human ranking: set 1 elicited the largest human
//! superiority effect, set 17 the strongest inferiority effect.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::Deserialize;

use crate::canvas::Glyph;
use crate::error::{Error, Result};
use crate::stimulus::GlyphPair;

pub const SET_COUNT: u32 = 17;

const CATALOG_JSON: &str = include_str!("../data/pomerantz_sets.json");
const HUMAN_CE_CSV: &str = include_str!("../data/human_ce.csv");

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct CatalogEntry {
    set_id: u32,
    name: String,
    base_a: Glyph,
    base_b: Glyph,
    context: Glyph,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusSet {
    pub set_id: u32,
    pub name: String,
    pub base: GlyphPair,
    pub context: Glyph,
    pub composite: GlyphPair,
}

impl StimulusSet {
    fn from_entry(entry: &CatalogEntry) -> Self {
        Self::assemble(entry.set_id, &entry.name, entry.base_a.clone(), entry.base_b.clone(), entry.context.clone())
    }

    fn assemble(set_id: u32, name: &str, base_a: Glyph, base_b: Glyph, context: Glyph) -> Self {
        let base = GlyphPair::new(base_a, base_b);
        let composite = base.with_context(&context);
        StimulusSet { set_id, name: name.to_string(), base, context, composite }
    }

    /// The same set with the context replaced by the empty glyph, so the
    /// composite pair equals the base pair.
    pub fn without_context(&self) -> Self {
        Self::assemble(self.set_id, &self.name, self.base.a.clone(), self.base.b.clone(), Glyph::empty())
    }
}

fn catalog() -> &'static [CatalogEntry] {
    static CATALOG: OnceLock<Vec<CatalogEntry>> = OnceLock::new();
    CATALOG.get_or_init(|| {
        let entries: Vec<CatalogEntry> =
            serde_json::from_str(CATALOG_JSON).expect("bundled glyph catalog parses");
        for (i, e) in entries.iter().enumerate() {
            assert_eq!(e.set_id as usize, i + 1, "catalog is ordered by set id");
            for g in [&e.base_a, &e.base_b, &e.context] {
                g.validate().expect("bundled glyphs are valid");
            }
        }
        entries
    })
}

pub fn build_set(set_id: u32) -> Result<StimulusSet> {
    if !(1..=SET_COUNT).contains(&set_id) {
        return Err(Error::UnknownSet(set_id));
    }
    Ok(StimulusSet::from_entry(&catalog()[(set_id - 1) as usize]))
}

pub fn all_sets() -> Vec<StimulusSet> {
    catalog().iter().map(StimulusSet::from_entry).collect()
}

/// The bundled glyph catalog as JSON text.
pub fn catalog_json() -> &'static str {
    CATALOG_JSON
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanCERecord {
    pub set_id: u32,
    /// RT_base − RT_composite, seconds.
    pub human_ce: f64,
    pub source: String,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    set_id: String,
    human_ce_seconds: String,
    source: String,
}

/// Load and validate a human CE file (`set_id,human_ce_seconds,source`).
/// Records are returned sorted by set id.
pub fn load_human_ce(path: impl AsRef<Path>) -> Result<Vec<HumanCERecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_human_ce(&text, path)
}

/// The human CE table shipped with the crate.
pub fn bundled_human_ce() -> Vec<HumanCERecord> {
    parse_human_ce(HUMAN_CE_CSV, Path::new("data/human_ce.csv")).expect("bundled human data is valid")
}

pub fn bundled_human_ce_csv() -> &'static str {
    HUMAN_CE_CSV
}

pub fn parse_human_ce(text: &str, origin: &Path) -> Result<Vec<HumanCERecord>> {
    let fail = |line: usize, message: String| Error::HumanData { path: PathBuf::from(origin), line, message };
    if text.trim().is_empty() {
        return Err(fail(1, "empty file".into()));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| fail(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["set_id", "human_ce_seconds", "source"] {
        return Err(fail(1, format!("expected header `set_id,human_ce_seconds,source`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut by_id: BTreeMap<u32, (usize, HumanCERecord)> = BTreeMap::new();
    for row in reader.deserialize::<RawRecord>() {
        let row_line = |e: &csv::Error| e.position().map(|p| p.line() as usize).unwrap_or(0);
        let raw = row.map_err(|e| fail(row_line(&e), e.to_string()))?;
        let line = by_id.len() + 2;
        let set_id: u32 = raw
            .set_id
            .parse()
            .map_err(|_| fail(line, format!("set_id `{}` is not an integer", raw.set_id)))?;
        if !(1..=SET_COUNT).contains(&set_id) {
            return Err(fail(line, format!("set_id {set_id} outside 1..={SET_COUNT}")));
        }
        let human_ce: f64 = raw
            .human_ce_seconds
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| fail(line, format!("set {set_id}: human_ce_seconds `{}` is not numeric", raw.human_ce_seconds)))?;
        if let Some((first, _)) = by_id.get(&set_id) {
            return Err(fail(line, format!("duplicate set {set_id} (first seen on line {first})")));
        }
        by_id.insert(set_id, (line, HumanCERecord { set_id, human_ce, source: raw.source }));
    }
    if by_id.is_empty() {
        return Err(fail(2, "no records".into()));
    }
    if let Some(missing) = (1..=SET_COUNT).find(|id| !by_id.contains_key(id)) {
        return Err(fail(by_id.len() + 2, format!("missing set {missing}")));
    }
    Ok(by_id.into_values().map(|(_, r)| r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canvas::{render_mask, Primitive};

    #[test]
    fn out_of_range_set_ids_are_errors() {
        assert!(matches!(build_set(0), Err(Error::UnknownSet(0))));
        assert!(matches!(build_set(18), Err(Error::UnknownSet(18))));
    }

    #[test]
    fn composites_have_more_primitives_than_bases() {
        let set = build_set(1).unwrap();
        assert!(set.composite.a.len() > set.base.a.len());
        assert!(set.composite.b.len() > set.base.b.len());
    }

    #[test]
    fn context_is_shared_by_both_composites() {
        for set in all_sets() {
            let extra_a: Vec<&Primitive> = set.composite.a.primitives[set.base.a.len()..].iter().collect();
            let extra_b: Vec<&Primitive> = set.composite.b.primitives[set.base.b.len()..].iter().collect();
            assert_eq!(extra_a, extra_b, "set {}", set.set_id);
            assert!(!set.context.is_empty());
        }
    }

    #[test]
    fn set1_composite_mask_is_union_of_base_and_context() {
        let set = build_set(1).unwrap();
        // Oracle: OR the separately rendered masks pixel by pixel.
        let base = render_mask(&set.base.a, 224);
        let context = render_mask(&set.context, 224);
        let composite = render_mask(&set.composite.a, 224);
        for i in 0..composite.bits.len() {
            assert_eq!(composite.bits[i], base.bits[i] || context.bits[i]);
        }
    }

    #[test]
    fn bundled_human_data_is_complete_and_ranked() {
        let records = bundled_human_ce();
        assert_eq!(records.len(), 17);
        let (argmax, max) = records
            .iter()
            .map(|r| (r.set_id, r.human_ce))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert!((1..=5).contains(&argmax));
        assert!((0.7..=1.38).contains(&max));
        for r in &records[..5] {
            assert!((0.7..=1.38).contains(&r.human_ce), "set {}", r.set_id);
        }
        // Ranking by CE descending reproduces set order.
        assert!(records.windows(2).all(|w| w[0].human_ce >= w[1].human_ce));
        assert!(records[12].human_ce < 0.0 && records[15].human_ce < 0.0);
    }

    fn sample_file(rows: &[&str]) -> String {
        let mut s = String::from("set_id,human_ce_seconds,source\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(parse_human_ce("", Path::new("x.csv")).is_err());
        assert!(parse_human_ce(&sample_file(&[]), Path::new("x.csv")).is_err());
    }

    #[test]
    fn validation_errors_name_the_record() {
        let full: Vec<String> = (1..=17).map(|i| format!("{i},0.1,src")).collect();
        let mut rows: Vec<&str> = full.iter().map(String::as_str).collect();
        rows[3] = "4,fast,src";
        let err = parse_human_ce(&sample_file(&rows), Path::new("x.csv")).unwrap_err().to_string();
        assert!(err.contains("x.csv:5") && err.contains("set 4"), "{err}");

        let mut rows: Vec<&str> = full.iter().map(String::as_str).collect();
        rows[5] = "3,0.2,src";
        let err = parse_human_ce(&sample_file(&rows), Path::new("x.csv")).unwrap_err().to_string();
        assert!(err.contains("duplicate set 3"), "{err}");

        let rows: Vec<&str> = full[..16].iter().map(String::as_str).collect();
        let err = parse_human_ce(&sample_file(&rows), Path::new("x.csv")).unwrap_err().to_string();
        assert!(err.contains("missing set 17"), "{err}");
    }

    #[test]
    fn records_come_back_sorted() {
        let mut rows: Vec<String> = (1..=17).map(|i| format!("{i},{}.0,src", 17 - i)).collect();
        rows.reverse();
        let text = sample_file(&rows.iter().map(String::as_str).collect::<Vec<_>>());
        let recs = parse_human_ce(&text, Path::new("x.csv")).unwrap();
        assert!(recs.windows(2).all(|w| w[0].set_id < w[1].set_id));
    }
}
