//! Drives the command-line front end in-process: synthesize a noisy crop,
//! denoise it, and score the result.

use mbwpnm::cli;

fn main() {
    let dir = std::env::temp_dir().join("mbwpnm_command_line");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let clean = concat!(env!("CARGO_MANIFEST_DIR"), "/data/astronaut_128.png");
    let noisy = dir.join("noisy.png");
    let restored = dir.join("restored.png");
    let (noisy, restored) = (noisy.to_str().unwrap(), restored.to_str().unwrap());

    let steps: [&[&str]; 3] = [
        &["synth", "--in", clean, "--sigma", "20,25,30", "--seed", "5", "--out", noisy],
        &["denoise", "--in", noisy, "--sigma", "20,25,30", "--k", "3", "--out", restored, "--ref", clean],
        &["metrics", "--ref", clean, "--test", restored],
    ];
    let (mut out, mut err) = (std::io::stdout(), std::io::stderr());
    for step in steps {
        println!("$ mbwpnm {}", step.join(" "));
        let code = cli::run(std::iter::once("mbwpnm").chain(step.iter().copied()), &mut out, &mut err);
        if code != cli::EXIT_OK {
            std::process::exit(code);
        }
    }
}
