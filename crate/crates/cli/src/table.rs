//! Committee-size table emission.

use std::io::Write;

use solida_analysis::{required_committee_size, table2, AnalysisError, TABLE2_K, TABLE2_PUBLISHED};

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub rho: Option<f64>,
    pub rho_prime: f64,
    pub k: u32,
    pub n: u64,
    pub published: Option<u64>,
}

impl Row {
    pub fn delta(&self) -> Option<i64> {
        self.published.map(|p| self.n as i64 - p as i64)
    }
}

fn printed(rho_prime: f64, k: u32) -> (Option<f64>, Option<u64>) {
    let row = TABLE2_PUBLISHED.iter().find(|r| (r.1 - rho_prime).abs() < 1e-12);
    let col = TABLE2_K.iter().position(|&x| x == k);
    match (row, col) {
        (Some(r), Some(c)) => (Some(r.0), Some(r.2[c])),
        (Some(r), None) => (Some(r.0), None),
        _ => (None, None),
    }
}

/// The printed grid, or a custom one. Any `rho' >= 1/3` is refused.
pub fn rows(rho_primes: &[f64], ks: &[u32]) -> Result<Vec<Row>, AnalysisError> {
    if rho_primes.is_empty() && ks.is_empty() {
        return Ok(table2()
            .into_iter()
            .map(|c| Row { rho: Some(c.rho), rho_prime: c.rho_prime, k: c.k, n: c.n, published: Some(c.published) })
            .collect());
    }
    let default_rp: Vec<f64> = TABLE2_PUBLISHED.iter().map(|r| r.1).collect();
    let rps = if rho_primes.is_empty() { &default_rp[..] } else { rho_primes };
    let ks = if ks.is_empty() { &TABLE2_K[..] } else { ks };
    let mut out = Vec::new();
    for &rp in rps {
        for &k in ks {
            let n = required_committee_size(rp, k)?;
            let (rho, published) = printed(rp, k);
            out.push(Row { rho, rho_prime: rp, k, n, published });
        }
    }
    Ok(out)
}

pub fn write_csv<W: Write>(rows: &[Row], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["rho", "rho_prime", "k", "n", "published_n", "delta"])?;
    let s = |v: Option<String>| v.unwrap_or_default();
    for r in rows {
        out.write_record([
            s(r.rho.map(|x| x.to_string())),
            r.rho_prime.to_string(),
            r.k.to_string(),
            r.n.to_string(),
            s(r.published.map(|x| x.to_string())),
            s(r.delta().map(|x| x.to_string())),
        ])?;
    }
    out.flush()?;
    Ok(())
}
