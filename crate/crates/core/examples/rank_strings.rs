//! Score strings with the built-in rule table, then with an external
//! score file layered on top.

use malregion::snapshot::StringEntry;
use malregion::strings::{rank_strings, HeuristicScorer, ScoreOverrides};

fn main() -> malregion::Result<()> {
    let strings: Vec<StringEntry> = [
        "hello world",
        "cmd.exe /c del %TEMP%\\x.bat",
        "SOFTWARE\\Microsoft\\Windows\\CurrentVersion\\Run",
        "http://203.0.113.9/gate.php",
        "GetProcAddress",
    ]
    .into_iter()
    .map(|t| StringEntry {
        text: t.into(),
        ref_addrs: Vec::new(),
    })
    .collect();

    println!("rule table:");
    for r in rank_strings(&strings, None) {
        println!(
            "  {:>5.2}  {:<50} {:?}",
            r.score,
            r.text,
            HeuristicScorer::categories(&r.text)
        );
    }

    let overrides = ScoreOverrides::from_json(br#"{"hello world": 9.9}"#)?;
    println!("with overrides:");
    for r in rank_strings(&strings, Some(&overrides)) {
        println!("  {:>5.2}  {}", r.score, r.text);
    }
    Ok(())
}
