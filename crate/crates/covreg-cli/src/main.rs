use clap::Parser;
use covreg_cli::{run, Cli, Command};

fn main() {
    let cli = Cli::parse();
    let json_out = match &cli.command {
        Command::Fit(a) => a.json_out.clone(),
        Command::Lrtest(a) => a.json_out.clone(),
        Command::PredictRegion(a) => a.json_out.clone(),
        Command::Simulate(a) => a.json_out.clone(),
    };
    match run(cli) {
        Ok(report) => {
            let text = serde_json::to_string_pretty(&report).expect("serializable report");
            if let Some(path) = json_out {
                if let Err(e) = std::fs::write(&path, &text) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    std::process::exit(2);
                }
            }
            println!("{text}");
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
