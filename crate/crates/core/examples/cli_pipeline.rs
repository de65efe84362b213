//! Drives the command-line front end in process: simulate a short run,
//! then reconstruct its transmittance distribution.

fn main() {
    let out = std::env::temp_dir().join("fsqkd-cli-example");
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/simulate.toml");
    for cmd in ["simulate", "pdtc"] {
        let args = ["fsqkd", "--config", config, "--out", out.to_str().unwrap(), cmd];
        let code = fsqkd::cli::main_with_args(args);
        println!("{cmd}: exit {code}");
    }
    for entry in std::fs::read_dir(&out).unwrap() {
        println!("{}", entry.unwrap().path().display());
    }
}
