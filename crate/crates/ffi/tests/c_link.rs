use std::path::{Path, PathBuf};
use std::process::Command;

/// The cargo target directory this test binary was built into.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.ancestors().nth(3).unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_solves() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    // test builds do not emit the staticlib, so build it explicitly
    let status = Command::new(env!("CARGO"))
        .args(["build", "--release", "-p", "ocp-ffi", "--lib"])
        .status()
        .unwrap();
    assert!(status.success());
    let lib = artifact_dir().join("release/libocp_ffi.a");
    assert!(lib.exists(), "{}", lib.display());
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(dir.join("tests/c_smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("converged=1"));
}
