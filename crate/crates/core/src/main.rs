use clap::Parser;

fn main() {
    let args = pacbound::cli::Args::parse();
    std::process::exit(pacbound::cli::main_with_args(args));
}
