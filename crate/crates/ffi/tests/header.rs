use std::path::PathBuf;
use std::process::Command;

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/uavlasov.h")).unwrap();
    for name in [
        "uav_last_error",
        "uav_field_new",
        "uav_field_eval",
        "uav_integrate",
        "uav_reference",
        "uav_config_parse",
        "uav_config_hash",
        "uav_sweep_csv",
        "uav_ensemble_new",
        "uav_vp_run",
        "UAV_STATUS_OK",
        "UAV_SCHEME_MRC",
    ] {
        assert!(h.contains(name), "missing {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let probe = tempfile::tempdir().unwrap();
    let src = probe.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"uavlasov.h\"\n\
         int probe(void) {\n\
           UavField *f = 0;\n\
           double s[6] = {0};\n\
           if (uav_field_new(\"uniform\", &f) != UAV_STATUS_OK) return 1;\n\
           UavStatus st = uav_integrate(f, UAV_SCHEME_TSF, 0.1, 1.0, 8, 16, s);\n\
           uav_field_free(f);\n\
           return (int)st;\n\
         }\n",
    )
    .unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let out = match Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .output()
    {
        Ok(o) => o,
        Err(e) => {
            eprintln!("skipping: no C compiler ({cc}): {e}");
            return;
        }
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
