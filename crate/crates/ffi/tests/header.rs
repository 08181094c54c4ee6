use std::path::PathBuf;
use std::process::Command;

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/rkopt.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for sym in [
        "rkopt_last_error",
        "rkopt_tableau_new_standard",
        "rkopt_rk_step_callback",
        "rkopt_optimizer_new",
        "rkopt_optimizer_step",
        "rkopt_verify_orders",
        "rkopt_run_config",
        "typedef struct RkoptOptimizer RkoptOptimizer;",
        "RKOPT_STATUS_CALLBACK = 5",
    ] {
        assert!(text.contains(sym), "missing {sym}");
    }
}

#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"rkopt.h\"\n\
         static int32_t grad(void *u, const double *t, double *g, size_t n) {\n\
           (void)u; for (size_t i = 0; i < n; i++) g[i] = t[i]; return 0; }\n\
         int main(void) {\n\
           RkoptOptimizer *o = rkopt_optimizer_new(\"algorithm=vanilla_rk; tableau=rk4\", 1);\n\
           double th[1] = {1.0}; RkoptStepReport r;\n\
           RkoptStatus s = rkopt_optimizer_step(o, grad, NULL, NULL, th, 1, &r);\n\
           rkopt_optimizer_free(o);\n\
           return s == RKOPT_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let status = match Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler available; skipped");
            return;
        }
    };
    assert!(status.success());
}
