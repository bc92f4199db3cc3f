//! Rendering: CSV tables and stdout summaries. Entropies are computed in
//! nats; the chosen log base divides values at rendering time only, so the
//! computation path is identical for every base.

use std::fs;
use std::path::Path;

use carq_core::{EntropySeries, KernelTable, RateEstimate};

use crate::scenario::LogBase;
use crate::{CliError, CliResult};

/// Kernel tables larger than this go to CSV only, never to stdout.
pub const STDOUT_TABLE_MAX_ROWS: usize = 4096;

/// CSV rows for an entropy series. The header is part of the CLI contract;
/// the first increment equals S_1.
pub fn series_csv(series: &EntropySeries, base: LogBase) -> String {
    let d = base.divisor();
    let mut out = String::from("n,S_n,S_n_over_n,delta_S_n\n");
    for i in 0..series.horizon() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            series.s[i] / d,
            series.rates[i] / d,
            series.diffs[i] / d
        ));
    }
    out
}

/// CSV rows for a kernel table in fixed word order.
pub fn kernel_csv(table: &KernelTable) -> String {
    let mut out = String::from("word,P\n");
    for (word, &p) in &table.entries {
        out.push_str(&format!("{},{}\n", table.word_label(word), p));
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Prints a kernel table; oversized tables are summarized instead of dumped.
pub fn print_kernel_table(table: &KernelTable) {
    println!(
        "kernel table: horizon {}, {} symbols, variant {}, {} retained words, pruned mass {}",
        table.horizon,
        table.symbol_count,
        table.variant,
        table.entries.len(),
        table.pruned_mass
    );
    if table.entries.len() > STDOUT_TABLE_MAX_ROWS {
        println!("  table exceeds {STDOUT_TABLE_MAX_ROWS} rows; use --kernel-csv to export it");
        return;
    }
    println!("  word,P");
    for (word, &p) in &table.entries {
        println!("  {},{}", table.word_label(word), p);
    }
}

/// Prints the entropy series rows in the CSV layout.
pub fn print_series(series: &EntropySeries, base: LogBase) {
    let d = base.divisor();
    println!("entropy series ({}):", base.label());
    println!("  n,S_n,S_n_over_n,delta_S_n");
    for i in 0..series.horizon() {
        println!(
            "  {},{},{},{}",
            i + 1,
            series.s[i] / d,
            series.rates[i] / d,
            series.diffs[i] / d
        );
    }
}

pub fn print_rate(rate: &RateEstimate, base: LogBase) {
    let d = base.divisor();
    println!(
        "rate estimate ({}): tail increment S_{} - S_{} = {}; normalized S_{}/{} = {}",
        base.label(),
        rate.horizon,
        rate.horizon - 1,
        rate.rate / d,
        rate.horizon,
        rate.horizon,
        rate.normalized / d
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    use carq_core::dynamics::KernelVariant;
    use carq_core::IndexWord;

    #[test]
    fn series_csv_has_the_contract_header_and_base_scaling() {
        let series = EntropySeries {
            s: vec![std::f64::consts::LN_2, 2.0 * std::f64::consts::LN_2],
            rates: vec![std::f64::consts::LN_2, std::f64::consts::LN_2],
            diffs: vec![std::f64::consts::LN_2, std::f64::consts::LN_2],
        };
        let nats = series_csv(&series, LogBase::E);
        assert!(nats.starts_with("n,S_n,S_n_over_n,delta_S_n\n"));
        assert!(nats.contains(&format!("1,{v},{v},{v}\n", v = std::f64::consts::LN_2)));
        let bits = series_csv(&series, LogBase::Two);
        assert!(bits.contains("1,1,1,1\n"));
        assert!(bits.contains("2,2,1,1\n"));
    }

    #[test]
    fn kernel_csv_uses_word_labels() {
        let mut entries = BTreeMap::new();
        entries.insert(IndexWord::new(vec![1, 2], 2).unwrap(), 0.25);
        entries.insert(IndexWord::new(vec![2, 2], 2).unwrap(), 0.75);
        let table = KernelTable {
            horizon: 2,
            symbol_count: 2,
            variant: KernelVariant::Car,
            entries,
            pruned_mass: 0.0,
        };
        assert_eq!(kernel_csv(&table), "word,P\n12,0.25\n22,0.75\n");
    }
}
