//! Keep per-run trajectory state for a stateless HTTP front end.
//!
//! ```not_rust
//! cargo run -p aligner-gate --example session_store
//! ```

use std::time::{Duration, Instant};

use aligner_gate::session::{SessionId, SessionStore};
use aligner_gate::trajectory::{Instruction, ThoughtStep};

fn main() {
    let store = SessionStore::new();
    let explicit = SessionId::new("run-42").unwrap();
    // Without a session header the id is derived from client and first message.
    let derived = SessionId::derive("10.0.0.7", "Book a table for two");
    println!("derived id: {}", derived.as_str());

    store
        .create_session(explicit.clone(), Instruction::new("a", "Pay the invoice").unwrap())
        .unwrap();
    store.get_or_create(derived.clone(), Instruction::new("b", "Book a table for two").unwrap());

    store
        .append_step(&explicit, ThoughtStep::new(0, "Check the amount.", "GetInvoice", "{}"))
        .unwrap();
    store.record_observation(&explicit, "$120 due Friday").unwrap();
    println!("history of run-42: {:?}", store.history(&explicit).unwrap());
    println!("history of derived: {:?}", store.history(&derived).unwrap());

    // Steps must arrive in order.
    let gap = store.append_step(&explicit, ThoughtStep::new(5, "skip ahead", "X", "{}"));
    println!("out-of-order append: {}", gap.unwrap_err());

    let later = Instant::now() + Duration::from_secs(31 * 60);
    let evicted = store.evict_expired(later, Duration::from_secs(30 * 60));
    println!("evicted after 31 minutes idle: {evicted}, remaining: {}", store.len());
}
