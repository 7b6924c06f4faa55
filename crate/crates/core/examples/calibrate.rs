//! Prints the flow statistics the default parameters are tuned against.
//!
//! `cargo run --release -p lobsim-core --example calibrate -- [params.toml] [seeds]`

use std::path::PathBuf;

use lobsim_core::runner::experiments::impact_study;
use lobsim_core::runner::{registry, run_scenario};
use lobsim_core::stats::{mann_whitney_greater, mean};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().filter(|a| a != "-").map(PathBuf::from);
    let seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30);
    let only = args.next();
    let want = |name: &str| only.as_deref().is_none_or(|o| o == name);

    let scenario = |name: &str, n: u64| -> anyhow::Result<_> {
        let mut c = registry(name).ok_or_else(|| anyhow::anyhow!("unknown scenario {name}"))?;
        c.hawkes.path = path.clone();
        c.seeds = (0..n).collect();
        Ok(c)
    };

    let t0 = std::time::Instant::now();
    let mut out = serde_json::Map::new();
    let mut put = |k: &str, v: f64| {
        out.insert(k.to_string(), serde_json::json!(if v.is_finite() { Some(v) } else { None }));
    };
    if want("noagent") {
        let mut c = scenario("twap_alone_hpov", seeds)?;
        c.twap = None;
        c.trading_seconds = 1200.0;
        c.event_log = true;
        let r = run_scenario(&c, None)?;
        let mut top = Vec::new();
        let mut levels = Vec::new();
        let mut spread = Vec::new();
        for o in &r.outputs {
            let book = lobsim_core::eventlog::replay(o.log.as_ref().expect("logged"), c.tick_size, 1000)?;
            let bb = book.best_bid().unwrap_or_default();
            let ba = book.best_ask().unwrap_or_default();
            spread.push((ba - bb) as f64);
            let at = |p| book.orders().filter(|x| x.price == p).map(|x| x.size).sum::<u64>() as f64;
            top.push((at(bb) + at(ba)) / 2.0);
            let mut px: Vec<_> = book.orders().map(|x| x.price).collect();
            px.sort();
            px.dedup();
            levels.push(px.len() as f64);
        }
        let moves: Vec<f64> = r
            .stats()
            .map(|s| s.mid_path.windows(2).filter(|w| w[0].1 != w[1].1).count() as f64 / s.mid_path.len() as f64)
            .collect();
        let drift: Vec<f64> = r.stats().map(|s| (s.mid_path.last().unwrap().1 - s.mid_path[0].1) / c.tick_size).collect();
        let sd = lobsim_core::stats::std_dev(&drift);
        put("noagent_vol", mean(&r.stats().map(|s| s.exo_volume_rate).collect::<Vec<_>>()));
        put("noagent_moves", mean(&moves));
        put("noagent_depth", mean(&top));
        put("noagent_spread", mean(&spread));
        put("noagent_seeded", mean(&r.stats().map(|s| s.seeded_orders as f64).collect::<Vec<_>>()));
        println!(
            "noagent: vol/s {:.3}  moves/s {:.3}  seeded {:.1}  top depth {:.1}  levels {:.1}  spread {:.2}  |dmid| sd {:.1} ticks/1200s",
            mean(&r.stats().map(|s| s.exo_volume_rate).collect::<Vec<_>>()),
            mean(&moves),
            mean(&r.stats().map(|s| s.seeded_orders as f64).collect::<Vec<_>>()),
            mean(&top),
            mean(&levels),
            mean(&spread),
            sd
        );
    }
    let mut hpov_slip = Vec::new();
    if want("hpov") {
        let hpov = run_scenario(&scenario("twap_alone_hpov", seeds)?, None)?;
        let vol: Vec<f64> = hpov.stats().map(|s| s.exo_volume_rate).collect();
        let child: Vec<f64> = hpov.stats().filter_map(|s| s.twap.as_ref()).map(|t| t.mean_child_size).collect();
        let done = hpov.stats().filter_map(|s| s.twap.as_ref()).filter(|t| t.complete).count();
        hpov_slip = hpov.twap_slippages();
        let moves: Vec<f64> = hpov
            .stats()
            .map(|s| s.mid_path.windows(2).filter(|w| w[0].1 != w[1].1).count() as f64 / s.mid_path.len() as f64)
            .collect();
        let spread: Vec<f64> = hpov.stats().map(|s| s.seeded_orders as f64).collect();
        println!("hpov: mid moves/s {:.3}  seeded/episode {:.1}", mean(&moves), mean(&spread));
        put("hpov_slip", mean(&hpov_slip));
        put("hpov_child", mean(&child));
        println!(
            "hpov: exo volume/s {:.3}  slippage {:.2} bps  child {:.3}  complete {}/{}  ({:.1?})",
            mean(&vol),
            mean(&hpov_slip),
            mean(&child),
            done,
            hpov.outputs.len(),
            t0.elapsed()
        );
    }
    if want("rpov1") {
        let rpov = run_scenario(&scenario("twap_alone_rpov1", seeds)?, None)?;
        let vol: Vec<f64> = rpov.stats().map(|s| s.exo_volume_rate).collect();
        let slip = rpov.twap_slippages();
        put("rpov1_vol", mean(&vol));
        put("rpov1_slip", mean(&slip));
        if !hpov_slip.is_empty() {
            put("order_p", mann_whitney_greater(&hpov_slip, &slip).1);
        }
        print!("rpov1: exo volume/s {:.3}  slippage {:.2} bps", mean(&vol), mean(&slip));
        if !hpov_slip.is_empty() {
            let (u, p) = mann_whitney_greater(&hpov_slip, &slip);
            print!("  hpov>rpov1 U={u:.0} p={p:.4}");
        }
        println!("  ({:.1?})", t0.elapsed());
    }
    if want("impact") {
        let imp = run_scenario(&scenario("twap_impact", seeds.max(50))?, None)?;
        let study = impact_study(&imp, 10)?;
        put("delta", study.fit.map_or(f64::NAN, |f| f.delta));
        put("r2", study.fit.map_or(f64::NAN, |f| f.r2));
        put("beta", study.decay_fit.map_or(f64::NAN, |f| f.beta));
        put("peak_bps", study.decay.peak * 1e4);
        match study.fit {
            Some(f) => print!("impact: delta {:.3} R2 {:.3}", f.delta, f.r2),
            None => print!("impact: fit failed {:?}", study.fit_error),
        }
        match study.decay_fit {
            Some(f) => print!("  beta {:.3} rmse {:.3} peak {:.2e}", f.beta, f.rmse, study.decay.peak),
            None => print!("  decay failed {:?} peak {:.2e}", study.decay_error, study.decay.peak),
        }
        println!("  ({:.1?})", t0.elapsed());
        for (q, i) in &study.curve.points {
            print!("({q:.0},{:.2}) ", i * 1e4);
        }
        println!();
        for (z, i) in study.decay.points.iter().step_by(study.decay.points.len().max(10) / 10) {
            print!("({z:.2},{:.2}) ", i * 1e4);
        }
        println!();
    }
    drop(put);
    println!("RESULT {}", serde_json::Value::Object(out));
    Ok(())
}
