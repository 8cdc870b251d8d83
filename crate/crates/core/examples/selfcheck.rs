//! The internal consistency battery behind `bnf verify`.

use birkhoff::selfcheck::run_selfchecks;

fn main() {
    let rep = run_selfchecks(1);
    for c in &rep.checks {
        println!("{:<48} {:>10.3e} ≤ {:<8.1e} {}", c.name, c.value, c.tolerance, if c.pass { "ok" } else { "FAIL" });
    }
    std::process::exit(if rep.all_pass() { 0 } else { 1 });
}
