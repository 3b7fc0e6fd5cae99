use std::io::Write;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use hlbkit_cli::{run, Cli, Output};

fn emit(cli: &Cli, out: &Output) -> Result<()> {
    match &cli.common.out {
        Some(path) => {
            std::fs::write(path, &out.primary).with_context(|| format!("writing {}", path.display()))?;
            for (ext, bytes) in &out.sidecars {
                let side = path.with_extension(ext);
                std::fs::write(&side, bytes).with_context(|| format!("writing {}", side.display()))?;
            }
        }
        None => std::io::stdout().write_all(&out.primary)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli).and_then(|out| emit(&cli, &out).map(|_| out.ok)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            let doc = serde_json::json!({ "schema": "hlb-error/1", "error": e.to_string(), "causes": chain });
            eprintln!("{doc}");
            ExitCode::from(2)
        }
    }
}
