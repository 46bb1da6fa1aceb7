//! Drive the command-line interface in-process, as the `provcat` binary
//! would.

fn provcat(args: &[&str]) -> String {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = provcat::cli::run(std::iter::once("provcat").chain(args.iter().copied()), &mut out, &mut err);
    let text = String::from_utf8_lossy(&out).trim_end().to_string();
    println!("$ provcat {}\n{text}{}", args.join(" "), String::from_utf8_lossy(&err));
    assert_eq!(code, 0, "exit code");
    text
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let cat = dir.path().join("catalog");
    let cat = cat.to_str().unwrap();
    provcat(&["catalog", "init", cat, "--logical-clock"]);
    provcat(&["--catalog", cat, "schema", "define-table", "Specimen", "-c", "Label:text"]);
    provcat(&["--catalog", cat, "vocab", "create", "Stain", "ST"]);
    provcat(&["--catalog", cat, "vocab", "add", "Stain", "hematoxylin", "-s", "H&E"]);
    provcat(&["--catalog", cat, "vocab", "find", "Stain", "H&E"]);
    let d = provcat(&["--catalog", cat, "dataset", "create", "--description", "slides"]);
    provcat(&["--catalog", cat, "dataset", "bump", &d, "--level", "minor"]);
    provcat(&["--catalog", cat, "dataset", "versions", &d]);
    provcat(&["--catalog", cat, "--format", "json", "dataset", "versions", &d]);
    provcat(&["--catalog", cat, "schema", "show", "Specimen"]);
}
