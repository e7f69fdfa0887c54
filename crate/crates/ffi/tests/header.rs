use std::path::PathBuf;
use std::process::Command;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(root().join("include/odolab.h")).unwrap();
    let lib = std::fs::read_to_string(root().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = lib
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() > 20);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from the header");
    }
    assert!(header.contains("typedef struct OdoLattice OdoLattice;"));
    assert!(header.contains("ODO_STATUS_DOMAIN_ERROR = 4"));
}

/// Compiles a small C client against the header when a C compiler is present.
#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler, skipping");
        return;
    }
    let dir = std::env::temp_dir().join(format!("odolab-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("client.c");
    std::fs::write(
        &src,
        r#"#include "odolab.h"
#include <stdio.h>
int run(void) {
    OdoLattice *l = NULL;
    char *s = NULL;
    if (odo_lattice_parse("2; 3 0; 0 2", &l) != ODO_STATUS_OK) {
        fprintf(stderr, "%s\n", odo_last_error());
        return 1;
    }
    odo_lattice_index(l, &s);
    odo_string_free(s);
    odo_lattice_free(l);
    return 0;
}
"#,
    )
    .unwrap();
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-c", "-o"])
        .arg(dir.join("client.o"))
        .arg("-I")
        .arg(root().join("include"))
        .arg(&src)
        .status()
        .unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert!(status.success());
}
