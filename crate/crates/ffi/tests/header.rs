use std::path::Path;

#[test]
fn header_declares_every_export() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/ocp.h")).unwrap();
    let source = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15, "{exports:?}");
    for name in exports {
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from ocp.h"
        );
    }
    assert!(header.contains("typedef struct OcpProblem OcpProblem;"));
    assert!(header.contains("OCP_STATUS_NOT_CONVERGED = 5"));
}
