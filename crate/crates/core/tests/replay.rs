mod common;

use std::fs;

use common::*;
use laneboost::analytics::{resale_revenue, surplus_decompose};
use laneboost::config::ReplayConfig;
use laneboost::io::IoError;
use laneboost::replay::{replay, ReplayError, ReplayInputs};
use laneboost::report::{add_analytics, load_bundle, Bundle, Dataset, Format, Manifest};

#[test]
fn empty_trades_give_flagged_zero_surplus() {
    let dir = fixture_dir("ten_rounds");
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("trades.csv");
    fs::write(
        &empty,
        "trade_id,utc_ms,buy_asset,x,sell_asset,y,fees_usd,lane,sender\n",
    )
    .unwrap();
    let cfg = ReplayConfig::load(&dir.join("config.toml")).unwrap();
    let inputs = ReplayInputs::load(
        &dir.join("auctions.csv"),
        Some(&empty),
        &dir.join("prices.csv"),
        None,
    )
    .unwrap();
    let out = replay(&cfg, &inputs).unwrap();
    let rows = surplus_decompose(&out.trades, &out.rounds);
    assert!(!rows.is_empty());
    for r in &rows {
        assert!(r.total_pnl_usd.is_zero());
        assert_eq!(r.flag, "zero_pnl");
        assert_eq!(r.captured_share_paid, None);
        assert!(r.balances());
    }
}

#[test]
fn subscription_payment_is_not_observable() {
    let r = replay_fixture("ten_rounds");
    let onchain_only: Vec<_> = r
        .out
        .payments
        .iter()
        .filter(|p| p.channel == laneboost::resale::Channel::OnChain)
        .cloned()
        .collect();
    assert_eq!(onchain_only.len(), r.out.payments.len() - 1);
    let with = resale_revenue(&id("kairos"), &r.out.rounds, &r.out.payments);
    let without = resale_revenue(&id("kairos"), &r.out.rounds, &onchain_only);
    assert_eq!(with[0].observable_eth, without[0].observable_eth);
    assert_eq!(with[0].observable_eth, eth("0.007"));
    assert_eq!(with[0].subscription_eth, eth("0.005"));
}

#[test]
fn coverage_counts_every_input() {
    let r = replay_fixture("ten_rounds");
    let c = r.out.coverage(&r.cfg, &r.inputs);
    assert_eq!(
        (c.rounds, c.bids, c.trades_in, c.trades_priced, c.payments),
        (10, 20, 5, 5, 3)
    );
    assert!(c.excluded.is_empty() && c.reference_series);
}

#[test]
fn trades_without_price_coverage_are_excluded() {
    let dir = fixture_dir("ten_rounds");
    let tmp = tempfile::tempdir().unwrap();
    let trades = tmp.path().join("trades.csv");
    fs::write(
        &trades,
        "trade_id,utc_ms,buy_asset,x,sell_asset,y,fees_usd,lane,sender\n\
         a,1770000071000,WETH,1,USDC,1900,0,express,wintermute\n\
         b,1770000071000,DOGE,1,USDC,1,0,regular,selini\n\
         c,1770100000000,WETH,1,USDC,1900,0,regular,selini\n",
    )
    .unwrap();
    let cfg = ReplayConfig::load(&dir.join("config.toml")).unwrap();
    let inputs = ReplayInputs::load(
        &dir.join("auctions.csv"),
        Some(&trades),
        &dir.join("prices.csv"),
        None,
    )
    .unwrap();
    let out = replay(&cfg, &inputs).unwrap();
    assert_eq!(out.trades.len(), 1);
    let reasons: Vec<_> = out
        .exclusions
        .iter()
        .map(|e| (e.trade_id.as_str(), e.reason.as_str()))
        .collect();
    assert_eq!(
        reasons,
        [
            ("b", "missing_price_coverage"),
            ("c", "missing_price_coverage")
        ]
    );
}

#[test]
fn bad_field_names_column_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("auctions.csv");
    fs::write(
        &path,
        "round_start_utc_ms,bidder,amount_eth,submitted_utc_ms\n\
         1770000051000,wintermute,0.008,1770000061000\n\
         1770000051000,selini,zero,1770000062000\n",
    )
    .unwrap();
    let err = laneboost::replay::read_auctions(&path).unwrap_err();
    match &err {
        IoError::Field { line, column, .. } => {
            assert_eq!((*line, column.as_str()), (3, "amount_eth"))
        }
        other => panic!("unexpected error {other}"),
    }
    assert!(err.to_string().contains(":3: column `amount_eth`"), "{err}");
}

#[test]
fn wrong_header_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("auctions.csv");
    fs::write(&path, "round_start,bidder,amount_eth,submitted_utc_ms\n").unwrap();
    let err = laneboost::replay::read_auctions(&path).unwrap_err();
    assert!(matches!(err, IoError::Header { .. }), "{err}");
}

#[test]
fn misaligned_round_start_is_an_input_error() {
    let dir = fixture_dir("ten_rounds");
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("auctions.csv");
    fs::write(
        &path,
        "round_start_utc_ms,bidder,amount_eth,submitted_utc_ms\n1770000050000,wintermute,0.008,1770000061000\n",
    )
    .unwrap();
    let cfg = ReplayConfig::load(&dir.join("config.toml")).unwrap();
    let inputs = ReplayInputs::load(&path, None, &dir.join("prices.csv"), None).unwrap();
    let err = replay(&cfg, &inputs).unwrap_err();
    assert!(matches!(err, ReplayError::Input { line: 2, .. }), "{err}");
}

#[test]
fn bundle_reloads_to_the_same_analytics() {
    let r = replay_fixture("ten_rounds");
    let bundle = r.out.bundle(&r.cfg, &r.inputs, Format::Csv);
    let tmp = tempfile::tempdir().unwrap();
    bundle
        .write(tmp.path(), Manifest::new("replay", "ten_rounds"))
        .unwrap();
    fs::write(
        tmp.path().join("prices.csv"),
        fs::read(fixture_dir("ten_rounds").join("prices.csv")).unwrap(),
    )
    .unwrap();

    let loaded = load_bundle(tmp.path()).unwrap();
    let ds = Dataset {
        rounds: &loaded.rounds,
        trades: &loaded.trades,
        payments: &loaded.payments,
        eth: loaded.eth.as_ref(),
        tracked: loaded.meta.tracked.clone(),
        reseller: loaded.meta.reseller.clone(),
        session: loaded.meta.session,
    };
    let mut again = Bundle::new();
    add_analytics(&mut again, &ds, Format::Csv);
    for (name, bytes) in again.files() {
        assert_eq!(Some(bytes), bundle.get(name), "{name} differs after reload");
    }
}

#[test]
fn tampered_rounds_fail_resettlement() {
    let r = replay_fixture("ten_rounds");
    let tmp = tempfile::tempdir().unwrap();
    r.out
        .bundle(&r.cfg, &r.inputs, Format::Csv)
        .write(tmp.path(), Manifest::new("replay", "ten_rounds"))
        .unwrap();
    let path = tmp.path().join("rounds.csv");
    let src = fs::read_to_string(&path).unwrap();
    fs::write(&path, src.replacen(",0.005,", ",0.0049,", 1)).unwrap();
    let err = load_bundle(tmp.path()).unwrap_err();
    assert!(err.to_string().contains("does not match bids.csv"), "{err}");
}
