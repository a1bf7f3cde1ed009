//! Batch CLI entry point.

fn main() {
    // Filled in by the cli module once the solver stack lands.
    eprintln!("sqzarr: command-line interface not wired up yet");
    std::process::exit(2);
}
