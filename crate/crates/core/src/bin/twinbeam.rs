use clap::Parser;

fn main() {
    let cli = twinbeam::cli::Cli::parse();
    std::process::exit(twinbeam::cli::run(cli));
}
