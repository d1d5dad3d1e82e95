//! Output files. Every CSV starts with `#` metadata lines; every JSON
//! document has a leading `metadata` object.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use pooled_mm::config::RunConfig;
use pooled_mm::sim::StepRecord;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub config_hash: String,
}

impl Metadata {
    pub fn new(command: &'static str, cfg: &RunConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: cfg.run.seed,
            config_hash: cfg.hash(),
        }
    }
}

pub enum Sink {
    Stdout,
    File(PathBuf),
}

impl Sink {
    fn write(&self, text: &str) -> Result<()> {
        match self {
            Sink::Stdout => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())
                    .context("writing to stdout")?;
                Ok(())
            }
            Sink::File(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        }
    }

    pub fn write_csv(
        &self,
        meta: &Metadata,
        extra: &[(&str, String)],
        header: &str,
        rows: &[String],
    ) -> Result<()> {
        let mut text = format!(
            "# pooled-mm {}\n# command: {}\n# seed: {}\n# config_hash: {}\n",
            meta.version, meta.command, meta.seed, meta.config_hash
        );
        for (k, v) in extra {
            text.push_str(&format!("# {k}: {v}\n"));
        }
        text.push_str(header);
        text.push('\n');
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        self.write(&text)
    }

    pub fn write_json<T: Serialize>(&self, meta: &Metadata, body: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            metadata: &'a Metadata,
            #[serde(flatten)]
            body: &'a T,
        }
        let mut text = serde_json::to_string_pretty(&Doc {
            metadata: meta,
            body,
        })?;
        text.push('\n');
        self.write(&text)
    }
}

pub const RECORD_HEADER: &str =
    "path,step,t,s,z,q,q_tilde,x,delta_a,delta_b,ask_posted,bid_posted,\
ask_truncated,bid_truncated,competitor_a,competitor_b,buy_arrival,sell_arrival,ask_fill,bid_fill";

pub fn record_row(path: u64, step: usize, r: &StepRecord<f64>) -> String {
    let d = r.quote.depths;
    format!(
        "{path},{step},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.t,
        r.s,
        r.z,
        r.q,
        r.q_tilde,
        r.x,
        d.ask,
        d.bid,
        d.ask_posted,
        d.bid_posted,
        r.quote.ask_truncated,
        r.quote.bid_truncated,
        r.competitor.ask,
        r.competitor.bid,
        r.buy_arrival,
        r.sell_arrival,
        r.ask_fill,
        r.bid_fill
    )
}
