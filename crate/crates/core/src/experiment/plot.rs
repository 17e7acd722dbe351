//! Figures from a results directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::svg::{bar_chart, line_chart, quadrant_scatter, Series};
use super::RESULTS_HEADER;
use crate::error::{Error, Result};
use crate::pomerantz;

#[derive(Debug, Clone)]
struct Row {
    model: String,
    probe: String,
    label: String,
    base: f64,
    composite: f64,
    ce: f64,
    stderr: f64,
}

fn plot_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Plot { path: path.to_path_buf(), message: message.into() }
}

fn read_table(path: &Path) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| plot_err(path, e.to_string()))?;
    let headers = r.headers().map_err(|e| plot_err(path, e.to_string()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| plot_err(path, format!("missing column `{name}`")))
    };
    let idx: Vec<usize> = RESULTS_HEADER.iter().map(|n| col(n)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| plot_err(path, e.to_string()))?;
        let num = |i: usize| {
            rec[idx[i]]
                .parse::<f64>()
                .map_err(|_| plot_err(path, format!("row {}: `{}` is not a number", line + 2, &rec[idx[i]])))
        };
        rows.push(Row {
            model: rec[idx[0]].to_string(),
            probe: rec[idx[1]].to_string(),
            label: rec[idx[2]].to_string(),
            base: num(3)?,
            composite: num(4)?,
            ce: num(5)?,
            stderr: num(6)?,
        });
    }
    if rows.is_empty() {
        return Err(plot_err(path, "no data rows"));
    }
    Ok(rows)
}

fn ordered_unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for i in items {
        if !out.iter().any(|o| o == i) {
            out.push(i.to_string());
        }
    }
    out
}

/// Figures for one condition table, as `(file name, svg)`.
fn figures_for(stem: &str, rows: &[Row], human: &BTreeMap<u32, f64>) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let models = ordered_unique(rows.iter().map(|r| r.model.as_str()));
    let sanity = stem.starts_with("sanity");
    for model in &models {
        let mrows: Vec<&Row> = rows.iter().filter(|r| &r.model == model).collect();
        let probes = ordered_unique(mrows.iter().map(|r| r.probe.as_str()));
        let labels = ordered_unique(mrows.iter().map(|r| r.label.as_str()));
        let get = |probe: &str, label: &str| mrows.iter().find(|r| r.probe == probe && r.label == label).copied();
        // Probes are listed shallow to deep; the last is the output layer.
        let last = probes.last().expect("nonempty table").clone();

        if sanity {
            let sims = |f: fn(&Row) -> f64| probes.iter().map(|p| get(p, "sanity").map(f).unwrap_or(f64::NAN)).collect();
            out.push((
                format!("{stem}__{model}_layers.svg"),
                line_chart(
                    &format!("{model}: background similarity ({stem})"),
                    "cosine similarity",
                    &probes,
                    &[("empty vs empty".into(), sims(|r| r.base)), ("empty vs dot".into(), sims(|r| r.composite))],
                ),
            ));
            continue;
        }

        let values = labels
            .iter()
            .map(|l| get(&last, l).map(|r| (r.ce, r.stderr)).unwrap_or((f64::NAN, 0.0)))
            .collect();
        out.push((
            format!("{stem}__{model}_bars.svg"),
            bar_chart(
                &format!("{model}: configural effect at {last} ({stem})"),
                "network CE",
                &labels,
                &[Series { name: model.clone(), values }],
            ),
        ));

        let series: Vec<(String, Vec<f64>)> = labels
            .iter()
            .map(|l| (l.clone(), probes.iter().map(|p| get(p, l).map(|r| r.ce).unwrap_or(f64::NAN)).collect()))
            .collect();
        out.push((
            format!("{stem}__{model}_layers.svg"),
            line_chart(&format!("{model}: CE by depth ({stem})"), "network CE", &probes, &series),
        ));

        if stem.starts_with("exp1") {
            let points: Vec<(f64, f64, String)> = labels
                .iter()
                .filter_map(|l| {
                    let id: u32 = l.parse().ok()?;
                    Some((*human.get(&id)?, get(&last, l)?.ce, l.clone()))
                })
                .collect();
            out.push((
                format!("{stem}__{model}_scatter.svg"),
                quadrant_scatter(&format!("{model}: human vs network CE at {last}"), "human CE (s)", "network CE", &points),
            ));
        }
    }
    out
}

/// Render every figure for the condition tables in `dir` into
/// `dir/figures`. Nothing is written unless every table parses.
pub fn plot(dir: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| plot_err(dir, e.to_string()))?;
    let mut tables: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .filter(|p| {
            let name = p.file_name().unwrap_or_default().to_string_lossy();
            ["exp1_", "exp2_", "sanity_"].iter().any(|pre| name.starts_with(pre))
        })
        .collect();
    tables.sort();
    if tables.is_empty() {
        return Err(plot_err(dir, "no result tables (exp1_*.csv, exp2_*.csv, sanity_*.csv)"));
    }
    let human_path = dir.join("human_ce.csv");
    let human_records = if human_path.exists() {
        pomerantz::load_human_ce(&human_path)?
    } else {
        pomerantz::bundled_human_ce()
    };
    let human: BTreeMap<u32, f64> = human_records.iter().map(|r| (r.set_id, r.human_ce)).collect();

    let mut figures = Vec::new();
    for path in &tables {
        let rows = read_table(path)?;
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        figures.extend(figures_for(&stem, &rows, &human));
    }
    let fig_dir = dir.join("figures");
    fs::create_dir_all(&fig_dir)?;
    let mut written = Vec::new();
    for (name, svg) in figures {
        fs::write(fig_dir.join(&name), svg)?;
        written.push(format!("figures/{name}"));
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    #[test]
    fn empty_directory_is_an_error_without_output() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(plot(dir.path()), Err(Error::Plot { .. })));
        assert!(!dir.path().join("figures").exists());
    }

    #[test]
    fn missing_column_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "exp2_a_b.csv", "model,probe,set_or_ef,base_sim,composite_sim,ce,n\nm,p,proximity,1,0.9,0.1,3\n");
        let err = plot(dir.path()).unwrap_err().to_string();
        assert!(err.contains("exp2_a_b.csv") && err.contains("stderr"), "{err}");
        assert!(!dir.path().join("figures").exists());
    }

    #[test]
    fn exp1_tables_get_scatter_bars_and_layers() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = RESULTS_HEADER.join(",") + "\n";
        for probe in ["relu1", "fc2"] {
            for set in 1..=17 {
                body += &format!("m,{probe},{set},0.9,0.8,0.1,0.01,5\n");
            }
        }
        write(dir.path(), "exp1_x_y.csv", &body);
        let files = plot(dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let bars = fs::read_to_string(dir.path().join("figures/exp1_x_y__m_bars.svg")).unwrap();
        assert_eq!(bars.matches("<rect x=").count() - 2, 17, "17 bars plus frame and legend");
    }
}
