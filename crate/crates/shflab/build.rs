use std::process::Command;

/// Embed a git-describe-style build identifier so every artifact header
/// records the exact source state it came from.
fn main() {
    let id = Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "untracked".to_string());
    println!("cargo:rustc-env=SHFLAB_BUILD_ID={id}");
    println!("cargo:rerun-if-changed=../../.git/HEAD");
}
