use std::path::Path;
use std::process::Command;

fn header() -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/psyforge.h");
    std::fs::read_to_string(p).expect("header is generated by the build script")
}

#[test]
fn every_exported_function_is_declared() {
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let h = header();
    let mut seen = 0;
    let mut lines = src.lines();
    while let Some(l) = lines.next() {
        if l.trim() != "#[no_mangle]" {
            continue;
        }
        let sig = lines.next().unwrap();
        let name = sig.split("fn ").nth(1).unwrap().split('(').next().unwrap();
        assert!(h.contains(&format!("{name}(")), "{name} missing from header");
        seen += 1;
    }
    assert!(seen >= 20, "only {seen} exports found");
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let probe = dir.path().join("probe.c");
    std::fs::write(&probe, "#include \"psyforge.h\"\nint main(void) { return psy_version() == 0; }\n").unwrap();
    for (cc, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = Command::new(cc).args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"]).arg(&include).arg(&probe).output() else {
            eprintln!("{cc} not available, skipping");
            continue;
        };
        assert!(out.status.success(), "{cc}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
