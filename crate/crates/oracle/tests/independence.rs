// SPDX-License-Identifier: Apache-2.0

// The reference detector must stay independent of the streaming engine:
// its only workspace dependency is the model crate.

#[test]
fn oracle_depends_only_on_model() {
    let manifest = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/Cargo.toml")).unwrap();
    let workspace_deps: Vec<&str> = manifest
        .lines()
        .filter(|l| l.contains("path ="))
        .filter_map(|l| l.split('=').next())
        .map(str::trim)
        .collect();
    assert_eq!(workspace_deps, ["acp-model"], "unexpected workspace deps: {workspace_deps:?}");
    assert!(!manifest.contains("acp-core"));
}
