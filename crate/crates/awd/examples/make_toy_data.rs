//! Regenerates the bundled toy sentiment corpus as JSONL splits.
//!
//! Usage: cargo run -p awd --example make_toy_data [out_dir]

use std::io::Write;

use awd::corpus::synthetic;

fn write_split(path: &std::path::Path, pairs: &[(String, String)]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    for (text, label) in pairs {
        writeln!(
            f,
            "{}",
            serde_json::json!({ "text": text, "label": label })
        )?;
    }
    Ok(())
}

fn main() -> std::io::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data".to_string());
    let out = std::path::Path::new(&out);
    std::fs::create_dir_all(out)?;
    write_split(&out.join("toy_train.jsonl"), &synthetic::separable(30, 11))?;
    write_split(&out.join("toy_val.jsonl"), &synthetic::separable(10, 12))?;
    write_split(&out.join("toy_test.jsonl"), &synthetic::separable(20, 13))?;
    write_split(&out.join("toy_new.jsonl"), &synthetic::separable(10, 14))?;
    println!("wrote toy splits to {}", out.display());
    Ok(())
}
