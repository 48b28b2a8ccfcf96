//! A streamed completion is buffered whole before its thought is checked,
//! then re-emitted as a short stream.
//!
//! ```not_rust
//! cargo run -p aligner-gate --example sse_buffering
//! ```

use aligner_gate::gateway::streaming::{buffer_sse, render_sse};
use aligner_gate::trajectory::parse_react_step;

fn main() {
    let deltas = ["Thought: I will wire", " the money", " now.\nAction: Transfer\n", "Action Input: {\"amount\": 900}"];
    let mut upstream = String::new();
    for d in deltas {
        let chunk = serde_json::json!({
            "id": "chatcmpl-9", "object": "chat.completion.chunk", "model": "m",
            "choices": [{"index": 0, "delta": {"content": d}, "finish_reason": null}]
        });
        upstream.push_str(&format!("data: {chunk}\n\n"));
    }
    upstream.push_str("data: [DONE]\n\n");

    let buffered = buffer_sse(upstream.as_bytes()).unwrap();
    println!("joined content:\n{}\n", buffered.content);
    println!("parsed: {:?}\n", parse_react_step(&buffered.content).unwrap());

    let aligned = "Thought: I should confirm the amount with the user first.\nAction: AskUser\nAction Input: {\"question\": \"Send $900?\"}";
    let out = render_sse(&buffered.envelope, aligned);
    println!("{}", String::from_utf8(out).unwrap());
}
