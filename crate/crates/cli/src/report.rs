use anyhow::Context;
use clap::Args;
use std::io::Write;
use std::path::PathBuf;

#[derive(Args)]
pub struct ReportArgs {
    /// suite.csv or ablation.csv files.
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Renders one CSV (with optional `# key=value` comment lines) as a markdown table.
pub fn markdown_table(text: &str) -> anyhow::Result<String> {
    let mut notes = Vec::new();
    let mut rows: Vec<Vec<&str>> = Vec::new();
    for line in text.lines() {
        if let Some(c) = line.strip_prefix('#') {
            notes.push(c.trim());
        } else if !line.trim().is_empty() {
            rows.push(line.split(',').collect());
        }
    }
    let Some(header) = rows.first() else {
        anyhow::bail!("empty table");
    };
    let mut out = String::new();
    for n in &notes {
        out.push_str(&format!("<!-- {n} -->\n"));
    }
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for (i, r) in rows.iter().enumerate().skip(1) {
        if r.len() != header.len() {
            anyhow::bail!("row {} has {} fields, header has {}", i + 1, r.len(), header.len());
        }
        out.push_str(&format!("| {} |\n", r.join(" | ")));
    }
    Ok(out)
}

pub fn run(args: &ReportArgs) -> anyhow::Result<()> {
    let mut doc = String::new();
    for path in &args.input {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let table = markdown_table(&text).with_context(|| format!("{}", path.display()))?;
        doc.push_str(&format!("### {}\n\n{table}\n", path.display()));
    }
    match &args.out {
        Some(p) => crate::io::write_with(p, |w| Ok(w.write_all(doc.as_bytes())?))?,
        None => std::io::stdout().write_all(doc.as_bytes())?,
    }
    Ok(())
}
