use std::path::Path;
use std::process::Command;

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/msgate.h")).unwrap();
    for symbol in [
        "msgate_last_error",
        "msgate_displacement_element",
        "msgate_table_compute",
        "msgate_table_compute_default",
        "msgate_table_load",
        "msgate_table_save",
        "msgate_table_free",
        "msgate_table_range",
        "msgate_table_scalars",
        "msgate_predict",
        "msgate_oracle_observables",
        "msgate_calibrate",
        "typedef struct MsgateTable MsgateTable;",
        "MSGATE_STATUS_PANIC = 5",
    ] {
        assert!(header.contains(symbol), "missing {symbol}");
    }
}

#[test]
fn header_compiles_as_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"msgate.h\"\nint main(void) { MsgateTable *t = 0; MsgateScalars s; (void)s; msgate_table_free(t); return MSGATE_STATUS_OK; }\n",
    )
    .unwrap();
    let status = match Command::new("cc").arg("-std=c99").arg("-Wall").arg("-Werror").arg("-fsyntax-only").arg("-I").arg(&include).arg(&src).status() {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler available; skipping");
            return;
        }
    };
    assert!(status.success());
}
