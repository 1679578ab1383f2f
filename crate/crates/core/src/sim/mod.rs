//! Deterministic scenario simulation.
//!
//! A run proceeds in stages, each drawing from its own named random stream:
//! the price path, the sequence of auctions, the arbitrage opportunities, the
//! searchers' submissions, resale batches, sequencing, and finally markout
//! accounting. Results depend only on the configuration and its seed.

mod opportunity;

pub use opportunity::{scan, Opportunity, OpportunityConfig, Side};

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::agents::{bid_decision, route_trade, value_round, ControlState, Role, Route};
use crate::analytics::{PaymentRecord, RoundRecord, TradeRecord};
use crate::auction::{settle, Bid};
use crate::config::{ConfigError, ScenarioConfig};
use crate::io::{ReceiptRow, TraceRow};
use crate::markout::{markout_pnl, Trade};
use crate::model::{EntityId, EthAmount, ModelError, TimeMs, TokenAmount, UsdAmount};
use crate::price::{
    generate_series, PriceBook, PriceError, PriceSeries, RollingVol, VolatilitySource,
    RESOLUTION_MS,
};
use crate::report::{
    add_analytics, add_records, price_rows, round_vol_rows, Bundle, Dataset, DatasetMeta, Format,
};
use crate::resale::{Channel, Receipt, ResaleError, ResaleLedger, SubAuctionWindow, Submission};
use crate::reserve::reserve_at;
use crate::rng::substream;
use crate::sequencer::{
    assign_or_fallback, resale_guarantee_holds, sort_merged, Lane, ResaleRoute, SequencerError,
    TxEvent, TxId,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Price(#[from] PriceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sequencer(#[from] SequencerError),
    #[error(transparent)]
    Resale(#[from] ResaleError),
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub rounds: Vec<RoundRecord>,
    /// Every submitted bid, in round order.
    pub bids: Vec<Bid>,
    /// Rounds whose reserve fell back to the floor for lack of price data.
    pub reserve_fallbacks: usize,
    /// Submitted transactions in execution order.
    pub trace: Vec<TxEvent>,
    pub receipts: Vec<Receipt>,
    pub payments: Vec<PaymentRecord>,
    pub trades: Vec<TradeRecord>,
    pub opportunities: usize,
    /// Trades whose markout could not be priced.
    pub unpriced_trades: usize,
    /// Express submissions re-routed to the regular lane.
    pub rejected_express: usize,
    pub ledger: ResaleLedger,
    pub prices: PriceSeries,
}

/// Runs a scenario.
pub fn run(cfg: &ScenarioConfig) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let schedule = &cfg.schedule;
    let first = schedule.first_round_at_or_after(cfg.start_utc_ms);
    let last = first + cfg.duration_rounds;

    let max_window = [
        cfg.valuation_window_ms,
        cfg.analytics.round_vol_window_ms,
        cfg.reserve.vol_window_ms().unwrap_or(0),
    ]
    .into_iter()
    .max()
    .unwrap_or(0);
    let first_start = schedule.round_bounds(first).start;
    let series_start = TimeMs(
        first_start.0.saturating_sub(max_window + RESOLUTION_MS) / RESOLUTION_MS * RESOLUTION_MS,
    );
    let max_delay = cfg
        .agents
        .iter()
        .map(|a| a.latency_ms + a.jitter_ms)
        .max()
        .unwrap_or(0)
        + cfg.sequencer.regular_delay_ms
        + cfg
            .reseller
            .as_ref()
            .map_or(0, |r| r.window_ms + r.latency_ms);
    let series_end =
        schedule.round_bounds(last).end + cfg.markout_horizon_ms + max_delay + 2 * RESOLUTION_MS;
    let len = ((series_end - series_start) / RESOLUTION_MS + 1) as usize;
    let vol = RollingVol::new(generate_series(cfg.seed, &cfg.prices, series_start, len)?);
    let series = vol.series();

    let reseller_id = cfg.reseller.as_ref().map(|r| &r.id);

    // Auctions: round `first + n` sells control of round `first + n + 1`.
    let mut value_rngs: Vec<_> = cfg
        .agents
        .iter()
        .map(|a| substream(cfg.seed, &format!("agent/{}/value", a.id)))
        .collect();
    let mut bid_rngs: Vec<_> = cfg
        .agents
        .iter()
        .map(|a| substream(cfg.seed, &format!("agent/{}/bid", a.id)))
        .collect();
    let mut rounds = Vec::with_capacity(cfg.duration_rounds as usize);
    let mut bids = Vec::new();
    let mut reserve_fallbacks = 0;
    let mut ledger = ResaleLedger::new();
    let mut payments = Vec::new();
    for idx in first..last {
        let bounds = schedule.round_bounds(idx);
        let regime = cfg.regimes.regime_of(bounds.start)?;
        let quote = reserve_at(&cfg.reserve, &bounds, Some(&vol as &dyn VolatilitySource));
        reserve_fallbacks += usize::from(quote.fallback);
        let sigma = vol.sigma(bounds.bid_close, cfg.valuation_window_ms)?;
        let mut round_bids = Vec::new();
        for (a, agent) in cfg.agents.iter().enumerate() {
            let strategy = agent.strategy_for(Some(regime));
            let valuation = value_round(agent, idx, sigma, &mut value_rngs[a]);
            let rng = &mut bid_rngs[a];
            if let Some(amount) = bid_decision(agent, strategy, &valuation, quote.amount, rng) {
                let lead = 1 + rng.random_range(0..RESOLUTION_MS);
                round_bids.push(Bid {
                    bidder: agent.id.clone(),
                    amount,
                    submitted_at: bounds.bid_close.saturating_sub_ms(lead),
                    round_index: idx,
                });
            }
        }
        let outcome = settle(&round_bids, quote.amount, bounds);
        if let (Some(w), Some(paid)) = (&outcome.winner, outcome.paid) {
            if reseller_id == Some(w) {
                ledger.record_primary_payment(schedule.round_bounds(idx + 1).start, paid);
            }
        }
        bids.extend(round_bids);
        rounds.push(RoundRecord {
            regime,
            eth_usd: series.price_at(bounds.bid_close).ok(),
            outcome,
        });
    }
    let controller_of = |round: u64| -> Option<&EntityId> {
        (round > first && round <= last)
            .then(|| rounds[(round - first - 1) as usize].outcome.winner.as_ref())
            .flatten()
    };

    // Opportunities over the controlled rounds.
    let from = series
        .index_at_or_before(schedule.round_bounds(first + 1).start)
        .unwrap_or(0);
    let to = series
        .index_at_or_before(schedule.round_bounds(last).end)
        .map_or(0, |i| i + 1);
    let opportunities = scan(
        series,
        from,
        to,
        &cfg.opportunities,
        &mut substream(cfg.seed, "opportunities"),
    );

    // Submissions.
    let searchers: Vec<_> = cfg
        .agents
        .iter()
        .filter(|a| a.role == Role::Searcher)
        .collect();
    let mut trade_rngs: Vec<_> = searchers
        .iter()
        .map(|a| substream(cfg.seed, &format!("agent/{}/latency", a.id)))
        .collect();
    let mut direct = Vec::new();
    let mut windows: BTreeMap<TimeMs, SubAuctionWindow> = BTreeMap::new();
    let mut next_id = 0u64;
    for opp in &opportunities {
        let edge = EthAmount::from_f64(opp.expected_edge_usd().max(0.0) / opp.cex_price);
        for (s, agent) in searchers.iter().enumerate() {
            let rng = &mut trade_rngs[s];
            let detected = rng.random::<f64>() < agent.opportunity_rate;
            let jitter = rng.random_range(0..=agent.jitter_ms);
            if !detected {
                continue;
            }
            let arrival = opp.time + agent.latency_ms + jitter;
            let round = schedule.round_containing(arrival).unwrap_or(0);
            let controller = controller_of(round);
            let control = ControlState {
                controller,
                controller_is_reseller: controller.is_some_and(|c| reseller_id == Some(c)),
            };
            let tx_id = TxId(next_id);
            next_id += 1;
            let mut tx = TxEvent::new(tx_id, agent.id.clone(), arrival, Lane::Regular, round);
            tx.payload = Some(opp.id);
            match route_trade(agent, edge, control) {
                Route::Regular => direct.push(tx),
                Route::Express => {
                    tx.lane = Lane::Express;
                    direct.push(tx);
                }
                Route::ViaResale {
                    reseller,
                    declared_payment,
                    channel,
                } => {
                    let r = cfg
                        .reseller
                        .as_ref()
                        .expect("resale route requires a reseller");
                    let origin = schedule.round_bounds(round).start;
                    let window = SubAuctionWindow::containing(arrival, origin, r.window_ms)?;
                    tx.lane = Lane::Express;
                    tx.resale = Some(ResaleRoute {
                        reseller,
                        latency_ms: r.latency_ms,
                        declared_payment,
                        batch_release: None,
                        batch_position: None,
                    });
                    windows
                        .entry(window.window_start)
                        .or_insert(window)
                        .submit(Submission {
                            tx,
                            declared_payment,
                            channel,
                        })?;
                }
            }
        }
    }

    // Resale batches.
    let mut receipts = Vec::new();
    let mut trace = direct;
    if let Some(r) = &cfg.reseller {
        for (start, window) in windows {
            let round_start = schedule
                .round_containing(start)
                .map_or(start, |i| schedule.round_bounds(i).start);
            let batch = window.close(&r.id, r.latency_ms);
            ledger.record_batch(round_start, &batch);
            for rc in &batch.receipts {
                payments.push(PaymentRecord {
                    time: rc.window_start_ms,
                    regime: cfg.regimes.regime_of(rc.window_start_ms)?,
                    channel: rc.channel,
                    amount: rc.payment_eth,
                    eth_usd: series.price_at(rc.window_start_ms).ok(),
                });
            }
            receipts.extend(batch.receipts);
            trace.extend(batch.txs);
        }
        if r.subscription_fee_eth.is_positive() {
            for round in first + 1..=last {
                if controller_of(round).is_none_or(|c| c != &r.id) {
                    continue;
                }
                let start = schedule.round_bounds(round).start;
                for _ in searchers.iter().filter(|a| a.subscribed) {
                    ledger.record_receipt(start, Channel::Subscription, r.subscription_fee_eth);
                    payments.push(PaymentRecord {
                        time: start,
                        regime: cfg.regimes.regime_of(start)?,
                        channel: Channel::Subscription,
                        amount: r.subscription_fee_eth,
                        eth_usd: series.price_at(start).ok(),
                    });
                }
            }
        }
    }

    // Sequencing.
    let mut rejected_express = 0;
    for tx in &mut trace {
        let controller = controller_of(tx.round_index);
        rejected_express += usize::from(assign_or_fallback(tx, &cfg.sequencer, controller)?);
    }
    sort_merged(&mut trace);

    // The first transaction to execute on each opportunity takes it.
    let mut book = PriceBook::new();
    book.insert(series.clone());
    let mut taken = vec![false; opportunities.len()];
    let mut trades = Vec::new();
    let mut unpriced_trades = 0;
    for tx in &trace {
        let Some(id) = tx.payload else { continue };
        let slot = &mut taken[id as usize];
        if *slot {
            continue;
        }
        *slot = true;
        let opp = &opportunities[id as usize];
        let (buy_amt, sell_amt) = opp.legs();
        let quote = cfg.opportunities.quote_asset.clone();
        let eth = cfg.prices.asset.clone();
        let (buy_asset, sell_asset) = match opp.side {
            Side::BuyEth => (eth, quote),
            Side::SellEth => (quote, eth),
        };
        let trade = Trade {
            trade_id: format!("tx{}", tx.tx_id.0),
            time: tx.executed_at.expect("assigned above"),
            buy_asset,
            x: TokenAmount::from_f64(buy_amt),
            sell_asset,
            y: TokenAmount::from_f64(sell_amt),
            fees: UsdAmount::ZERO,
            lane: tx.lane,
            sender: tx.sender.clone(),
        };
        match markout_pnl(&trade, &book, cfg.markout_horizon_ms) {
            Ok(pnl) => trades.push(TradeRecord {
                regime: cfg.regimes.regime_of(trade.time)?,
                pnl: UsdAmount::from_f64(pnl),
                tx_fee: cfg.opportunities.tx_fee_usd,
                trade,
            }),
            Err(e) => {
                log::debug!("trade {} unpriced: {e}", trade.trade_id);
                unpriced_trades += 1;
            }
        }
    }

    Ok(SimOutput {
        rounds,
        bids,
        reserve_fallbacks,
        trace,
        receipts,
        payments,
        trades,
        opportunities: opportunities.len(),
        unpriced_trades,
        rejected_express,
        ledger,
        prices: vol.series().clone(),
    })
}

/// Counters reported next to a simulation bundle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub name: String,
    pub seed: u64,
    pub rounds: usize,
    pub settled_rounds: usize,
    pub bids: usize,
    pub opportunities: usize,
    pub transactions: usize,
    pub trades: usize,
    pub unpriced_trades: usize,
    pub rejected_express: usize,
    pub reserve_fallbacks: usize,
    pub resale_guarantee_holds: Option<bool>,
    pub reseller_bids_paid_eth: EthAmount,
    pub reseller_onchain_eth: EthAmount,
    pub reseller_subscription_eth: EthAmount,
}

impl SimOutput {
    pub fn summary(&self, cfg: &ScenarioConfig) -> SimSummary {
        let totals = self.ledger.totals(TimeMs(0)..TimeMs(u64::MAX));
        SimSummary {
            name: cfg.name.clone(),
            seed: cfg.seed,
            rounds: self.rounds.len(),
            settled_rounds: self
                .rounds
                .iter()
                .filter(|r| r.outcome.is_settled())
                .count(),
            bids: self.bids.len(),
            opportunities: self.opportunities,
            transactions: self.trace.len(),
            trades: self.trades.len(),
            unpriced_trades: self.unpriced_trades,
            rejected_express: self.rejected_express,
            reserve_fallbacks: self.reserve_fallbacks,
            resale_guarantee_holds: cfg
                .reseller
                .as_ref()
                .map(|r| resale_guarantee_holds(&cfg.sequencer, r.window_ms, r.latency_ms)),
            reseller_bids_paid_eth: totals.bids_paid_primary,
            reseller_onchain_eth: totals.onchain_receipts,
            reseller_subscription_eth: totals.subscription_receipts,
        }
    }

    /// Every output file of a run. Record files are CSV; analytics tables
    /// follow `format`.
    pub fn bundle(&self, cfg: &ScenarioConfig, format: Format) -> Bundle {
        let meta = DatasetMeta {
            schedule: cfg.schedule,
            reference_asset: cfg.prices.asset.clone(),
            tracked: cfg.tracked_entities(),
            reseller: cfg.reported_reseller(),
            session: cfg.analytics.session,
        };
        let mut b = Bundle::new();
        add_records(
            &mut b,
            &meta,
            &self.rounds,
            &self.bids,
            &self.trades,
            &self.payments,
        );
        let vol = RollingVol::new(self.prices.clone());
        b.add_table(
            "round_vol",
            &round_vol_rows(&self.rounds, &vol, cfg.analytics.round_vol_window_ms),
            Format::Csv,
        );
        let trace: Vec<TraceRow> = self.trace.iter().map(TraceRow::from).collect();
        b.add_table("trace", &trace, Format::Csv);
        let receipts: Vec<ReceiptRow> = self
            .receipts
            .iter()
            .map(|r| ReceiptRow {
                window_start_ms: r.window_start_ms,
                tx_id: r.tx_id,
                channel: r.channel,
                payment_eth: r.payment_eth,
            })
            .collect();
        b.add_table("receipts", &receipts, Format::Csv);
        if cfg.output.prices {
            b.add_table("prices", &price_rows(&self.prices), Format::Csv);
        }
        let ds = Dataset {
            rounds: &self.rounds,
            trades: &self.trades,
            payments: &self.payments,
            eth: Some(&self.prices),
            tracked: meta.tracked.clone(),
            reseller: meta.reseller.clone(),
            session: meta.session,
        };
        add_analytics(&mut b, &ds, format);
        b.add_json("summary.json", &self.summary(cfg));
        b
    }
}
