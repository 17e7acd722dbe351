//! Acceptance checks live in `tests/acceptance.rs`; this crate only
//! collects the report lines.

/// Print one `PASS`/`FAIL` line for a criterion and hand back `ok`.
pub fn report(ok: bool, criterion: &str, detail: impl AsRef<str>) -> bool {
    println!("{} {criterion}: {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
    ok
}
