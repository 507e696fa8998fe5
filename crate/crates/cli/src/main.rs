use clap::Parser;

fn main() {
    let code = clauseplan_cli::run(clauseplan_cli::Cli::parse());
    std::process::exit(i32::from(code));
}
