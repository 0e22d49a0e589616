//! Prints the built-in CoT cue catalog and the five-cue shortlist.
//!
//! ```bash
//! cargo run -p medcot --example cue_catalog
//! ```

use medcot::prompting::{cue_catalog, cue_shortlist};

fn main() {
    println!("{:>3}  {:<9} cue", "id", "shortlist");
    for cue in cue_catalog() {
        let tag = match cue.shortlist_rank {
            Some(rank) => format!("#{rank}"),
            None if cue.is_direct_baseline() => "(direct)".to_string(),
            None => String::new(),
        };
        println!("{:>3}  {:<9} {}", cue.id, tag, cue.text);
    }
    println!("\nshortlist in rank order:");
    for cue in cue_shortlist() {
        println!("  #{} -> id {:>2}: {}", cue.shortlist_rank.unwrap(), cue.id, cue.text);
    }
}
