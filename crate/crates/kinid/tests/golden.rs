//! Byte-level layout of the protocol and statistics reports. The golden
//! files were produced with C `printf`-style formatting of the same values.

mod common;

use common::*;
use kinid::report::{protocol_table, statistics_text};

#[test]
fn protocol_layout_matches_golden_file() {
    assert_eq!(protocol_table(&protocol_rows()), PROTOCOL);
}

#[test]
fn statistics_layout_matches_golden_file() {
    assert_eq!(statistics_text(&statistics(), &summary()), STATISTICS);
}

#[test]
fn statistics_rows_follow_table_style() {
    let row = STATISTICS.lines().nth(1).unwrap();
    assert_eq!(row, "k1            8.0e-03       8.114e-03  ± 2.053e-03 ≙ 25.30 %");
}
