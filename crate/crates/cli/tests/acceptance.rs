//! Every acceptance criterion at its stated tolerance, one line each.

use cutoff_cli::acceptance::run_tier;
use cutoff_cli::Tier;

fn main() {
    let outcomes = run_tier(Tier::Full, &mut std::io::stdout());
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    println!("{} of {} criteria passed", outcomes.len() - failed.len(), outcomes.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
