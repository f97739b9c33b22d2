//! Regenerate the shipped level fixtures.
//!
//! Usage: `gen-fixtures [DIR] [EXE]`. The level 5 executable defaults to
//! the `sf-avg` binary built alongside this one.

use std::path::PathBuf;

fn main() {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(shellforge_conformance::fixtures_dir);
    let exe_path = std::env::args()
        .nth(2)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::current_exe().expect("own path").with_file_name("sf-avg"));
    let exe = std::fs::read(&exe_path).unwrap_or_else(|e| {
        eprintln!("cannot read {}: {e} (build it with `cargo build -p shellforge-conformance`)", exe_path.display());
        std::process::exit(1);
    });
    match shellforge_conformance::write_fixtures(&dir, &exe) {
        Ok(paths) => paths.iter().for_each(|p| println!("{}", p.display())),
        Err(e) => {
            eprintln!("cannot write fixtures: {e}");
            std::process::exit(1);
        }
    }
}
