use clap::Parser;

fn main() {
    // Argument errors exit with code 2 via clap before run() is
    // reached, so no report file can be written on a parse failure.
    let cli = coalweb_cli::Cli::parse();
    std::process::exit(coalweb_cli::run(&cli));
}
