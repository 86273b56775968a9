//! Write the golden offline scenario to a directory, ready for the CLI:
//!
//! ```bash
//! cargo run -p midstream --example golden_fixture -- /tmp/demo
//! ```

fn main() {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "demo-fixture".to_string());
    let dir = std::path::PathBuf::from(dir);
    let fixture = midstream::fixtures::golden();
    let paths = fixture.write_files(&dir).expect("write fixture files");
    let config_path = dir.join("config.toml");
    std::fs::write(&config_path, fixture.config_toml()).expect("write config");
    println!("problems: {}", paths.problems.display());
    println!("corpus:   {}", paths.corpus.display());
    println!("script:   {}", paths.script.display());
    println!("config:   {}", config_path.display());
    println!();
    println!("run it with:");
    println!(
        "  midstream run --problems {} --config {} --script {} --corpus {} --out {}",
        paths.problems.display(),
        config_path.display(),
        paths.script.display(),
        paths.corpus.display(),
        dir.join("out").display(),
    );
}
