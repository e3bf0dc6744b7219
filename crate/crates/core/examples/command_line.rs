//! Calls the command-line front end in process, the same way the
//! `dual-reflect` binary does, and captures its output.

use std::error::Error;
use std::path::Path;

use dual_reflect::cli;

pub fn run_example() -> Result<i32, Box<dyn Error>> {
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/converge1.rules");
    let script = script.to_str().ok_or("non-UTF-8 path")?;
    let args = [
        "dual-reflect", "translate", "--from", "Chinese", "--to", "English", "--backend", "scripted", "--script",
        script,
    ];

    let (mut stdout, mut stderr) = (Vec::new(), Vec::new());
    let code = cli::run_with_io(args, &mut "你好".as_bytes(), &mut stdout, &mut stderr);
    println!("exit code {code}");
    print!("stdout: {}", String::from_utf8(stdout)?);
    print!("{}", String::from_utf8(stderr)?);
    Ok(code)
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example().map(|_| ())
}
