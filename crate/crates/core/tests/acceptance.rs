//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fisim::asm::{assemble, disassemble};
use fisim::campaign::{Campaign, CampaignReport, Category, OutcomeRecord, Target};
use fisim::failsafe::{oracle, ActionOptions, Scenario, ScenarioId};
use fisim::faults::{all_models, enumerate_fault_space, fault_space_size, FaultModel, FaultSpec};
use fisim::glitch::{map_offset, run_glitch_campaign, GlitchConfig, GlitchTarget};
use fisim::isa::{MemoryLayout, Termination};
use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn shipped_campaigns() -> Vec<(ScenarioId, Campaign, CampaignReport)> {
    ScenarioId::ALL
        .into_iter()
        .map(|id| {
            let sc = Scenario::shipped(id).unwrap();
            let c = Campaign::for_scenario(&sc).unwrap();
            let r = c.run_exhaustive(id.as_str(), &all_models(), true).unwrap();
            (id, c, r)
        })
        .collect()
}

/// Counts the fault menu by walking the nine model definitions literally.
fn literal_count(length: u64, models: &BTreeSet<FaultModel>) -> u64 {
    let mut per_cycle = 0;
    for m in models {
        per_cycle += match m {
            FaultModel::InstrSkip => 1,
            FaultModel::InstrBitFlip => 32,
            FaultModel::InstrByteSet | FaultModel::InstrByteClear => 4,
            FaultModel::RegClear | FaultModel::RegFill => 2 * 16,
            FaultModel::RegBitFlip => 2 * 16 * 32,
            FaultModel::RegByteSet | FaultModel::RegByteClear => 2 * 16 * 4,
        };
    }
    length * per_cycle
}

fn c1_fault_space() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut mismatches = 0;
    for _ in 0..50 {
        let length = rng.random_range(1..=200u64);
        let k = rng.random_range(1..=FaultModel::ALL.len());
        let models: BTreeSet<FaultModel> = FaultModel::ALL
            .into_iter()
            .choose_multiple(&mut rng, k)
            .into_iter()
            .collect();
        let enumerated = enumerate_fault_space(length, &models).unwrap().count() as u64;
        let closed = fault_space_size(length, &models);
        if enumerated != closed || closed != literal_count(length, &models) {
            mismatches += 1;
        }
    }
    let one = fault_space_size(1, &all_models());
    let one_enum = enumerate_fault_space(1, &all_models()).unwrap().count();
    verdict(
        mismatches == 0 && one == 1385 && one_enum == 1385 && literal_count(1, &all_models()) == 1385,
        format!("50 random (L, models) pairs, {mismatches} mismatches; L=1 all models: closed {one}, enumerated {one_enum}, expected 1385"),
    )
}

fn c2_golden_agreement() -> Verdict {
    let mut checked = 0;
    let mut bad = Vec::new();
    let mut goldens = Vec::new();
    for id in ScenarioId::ALL {
        let sc = Scenario::shipped(id).unwrap();
        for inputs in sc.valid_inputs().unwrap() {
            let target = Target::from_scenario(&sc, &inputs).unwrap();
            let (end, _) = target.profile(100_000).unwrap();
            let got = target.observe(&end);
            checked += 1;
            if end.termination() != Termination::Halted || got != Some(oracle(&inputs)) {
                bad.push(format!("{id} {inputs:?}"));
            }
        }
        let target = Target::golden(&sc).unwrap();
        let (end, _) = target.profile(100_000).unwrap();
        goldens.push(target.observe(&end).map(|o| o.action));
    }
    let expected = vec![Some(6), Some(6), Some(7)];
    verdict(
        bad.is_empty() && goldens == expected,
        format!(
            "{checked} input encodings, {} mismatches; golden actions {:?} (expected RTL=6, RTL=6, Land=7)",
            bad.len(),
            goldens.iter().flatten().collect::<Vec<_>>()
        ),
    )
}

const VALID_ACTIONS: [u32; 7] = [0, 1, 5, 6, 7, 9, 10];

/// Re-derives the category definition for one record.
fn record_consistent(r: &OutcomeRecord, golden: &ActionOptions) -> bool {
    let halted = r.termination == Termination::Halted;
    if (r.category == Category::Reset) != !halted {
        return false;
    }
    if !halted {
        return true;
    }
    let Some(o) = r.observed else {
        return r.category == Category::InvalidState;
    };
    if (r.category == Category::Benign) != (o == *golden) {
        return false;
    }
    let others_differ = (o.cause, o.allow_user_takeover, o.clear_condition)
        != (golden.cause, golden.allow_user_takeover, golden.clear_condition);
    match r.category {
        Category::Benign => true,
        Category::NoAction => o.action == 0 && golden.action != 0,
        Category::InvalidState => !VALID_ACTIONS.contains(&o.action) && !(o.action == 0 && golden.action != 0),
        Category::CorrectActionOtherFields => {
            VALID_ACTIONS.contains(&o.action) && o.action == golden.action && others_differ
        }
        Category::ErrorAction => {
            VALID_ACTIONS.contains(&o.action) && o.action != golden.action && !(o.action == 0 && golden.action != 0)
        }
        Category::Reset => false,
    }
}

fn c3_partition(runs: &[(ScenarioId, Campaign, CampaignReport)]) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (id, c, r) in runs {
        let sum: u64 = Category::ALL.iter().map(|&k| r.counts.get(k)).sum();
        let size = fault_space_size(c.length(), &all_models());
        let inconsistent = r.records.iter().filter(|x| !record_consistent(x, &c.golden)).count();
        ok &= sum == size && r.total() == size && inconsistent == 0 && c.length() <= 100;
        parts.push(format!(
            "{id}: L={} sum={sum} size={size} inconsistent={inconsistent}",
            c.length()
        ));
    }
    verdict(ok, parts.join("; "))
}

/// Window cycle whose fault-free instruction stores to `output_base`.
fn action_store_cycle(c: &Campaign) -> Option<u64> {
    (0..c.length()).find(|&cyc| {
        let snap = c.snapshot(cyc).unwrap();
        match fisim::isa::decode(c.window_trace()[cyc as usize].word) {
            fisim::isa::Decoded::Valid(fisim::isa::Instruction::Str { base, offset, .. }) => {
                snap.reg(base).wrapping_add(u32::from(offset)) == c.target.output_base
            }
            _ => false,
        }
    })
}

fn c4_no_action(runs: &[(ScenarioId, Campaign, CampaignReport)]) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (id, c, r) in runs {
        let no_action = r.counts.get(Category::NoAction);
        let store = action_store_cycle(c);
        let skip_hit = store.is_some_and(|cyc| {
            r.records
                .iter()
                .any(|x| x.spec == FaultSpec::skip(cyc) && x.category == Category::NoAction)
        });
        ok &= no_action > 0 && skip_hit;
        parts.push(format!(
            "{id}: {no_action} NoAction, skip of action store at cycle {} -> {}",
            store.map_or("?".into(), |s| s.to_string()),
            if skip_hit { "NoAction" } else { "not NoAction" }
        ));
    }
    verdict(ok, parts.join("; "))
}

/// Mnemonic of every code address, read back from the disassembly listing.
fn mnemonics_from_listing(listing: &str) -> BTreeMap<u32, String> {
    listing
        .lines()
        .filter_map(|line| {
            let (addr, rest) = line.split_once(": ")?;
            let addr = u32::from_str_radix(addr.trim(), 16).ok()?;
            let text = rest.get(10..)?.trim();
            Some((addr, text.split_whitespace().next()?.to_string()))
        })
        .collect()
}

fn c5_clustering(runs: &[(ScenarioId, Campaign, CampaignReport)]) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (id, c, r) in runs {
        let sc = Scenario::shipped(*id).unwrap();
        let mnemonics = mnemonics_from_listing(&disassemble(&sc.image, &sc.symbols));
        let (mut on_target, mut total) = (0u64, 0u64);
        for (cyc, row) in r.histogram.iter().enumerate() {
            let n = row.get(Category::NoAction) + row.get(Category::ErrorAction);
            total += n;
            let entry = c.window_trace()[cyc];
            let m = mnemonics.get(&entry.pc).map(String::as_str).unwrap_or("");
            let qualifying = match m {
                "CMP" | "CMPI" | "BEQ" | "BNE" | "BLT" | "BGE" => true,
                "STR" => {
                    // Output store: the effective address lies in the output record.
                    let snap = c.snapshot(cyc as u64).unwrap();
                    let w = entry.word;
                    let addr = snap.reg(w.rs1()).wrapping_add(u32::from(w.imm16() & 0xFFF));
                    (c.target.output_base..c.target.output_base + 16).contains(&addr)
                }
                _ => false,
            };
            if qualifying {
                on_target += n;
            }
        }
        let frac = on_target as f64 / total.max(1) as f64;
        ok &= frac >= 0.80;
        parts.push(format!("{id}: {on_target}/{total} = {:.1}%", 100.0 * frac));
    }
    verdict(ok, format!("threshold 80%; {}", parts.join("; ")))
}

fn c6_clock_ratio() -> Verdict {
    let cfg = |offset, width| {
        GlitchConfig {
            clock_ratio: 5.25,
            trigger_delay: 0,
            decay_delay: 0,
            tail: 0,
            ..GlitchConfig::default()
        }
        .with_cell(offset, width)
    };
    let w4 = map_offset(&cfg(4, 1));
    let w0 = map_offset(&cfg(0, 1));
    let w2 = map_offset(&cfg(2, 1));
    verdict(
        (w4.first_cycle, w4.last_cycle) == (21, 26)
            && (w0.first_cycle, w0.last_cycle) == (0, 5)
            && w2.first_cycle == 10
            && w2.contains(11),
        format!(
            "offset 4 -> [{}, {}], offset 0 -> [{}, {}], offset 2 -> [{}, {}] (expected [21, 26], [0, 5], covers 11)",
            w4.first_cycle, w4.last_cycle, w0.first_cycle, w0.last_cycle, w2.first_cycle, w2.last_cycle
        ),
    )
}

fn c7_correlation(runs: &[(ScenarioId, Campaign, CampaignReport)]) -> Verdict {
    let cfg = GlitchConfig {
        fault_prob: 1.0,
        trigger_delay: 0,
        decay_delay: 0,
        tail: 0,
        ..GlitchConfig::default()
    };
    let offsets: Vec<u32> = (0..=11).collect();
    let widths = [1, 2, 3];
    let mut ok = true;
    let mut parts = Vec::new();
    for (id, c, r) in runs {
        let sc = Scenario::shipped(*id).unwrap();
        let gt = GlitchTarget::new(Target::golden(&sc).unwrap(), None).unwrap();
        let g = run_glitch_campaign(id.as_str(), &gt, &cfg, &offsets, &widths, 1000, 0xC0FFEE).unwrap();
        // Success cycles as absolute cycles.
        let success: BTreeSet<u64> = r.success_cycles().iter().map(|k| c.window.start + k).collect();
        let (mut hit_cells, mut hit_ok, mut miss_cells, mut miss_ok) = (0, 0, 0, 0);
        for cell in &g.cells {
            let hits = cell.window.cycles().any(|k| success.contains(&(gt.trigger + k)));
            let successes = cell.counts.successes();
            if hits {
                hit_cells += 1;
                hit_ok += usize::from(successes >= 1);
            } else {
                miss_cells += 1;
                miss_ok += usize::from(successes == 0);
            }
        }
        ok &= hit_ok == hit_cells && miss_ok == miss_cells && hit_cells > 0 && miss_cells > 0;
        parts.push(format!(
            "{id}: {hit_ok}/{hit_cells} intersecting cells with successes, {miss_ok}/{miss_cells} disjoint cells without"
        ));
    }
    verdict(ok, parts.join("; "))
}

fn c8_width_monotonicity() -> Verdict {
    const Z99: f64 = 2.5758;
    let sc = Scenario::shipped(ScenarioId::RcLoss).unwrap();
    let gt = GlitchTarget::new(Target::golden(&sc).unwrap(), None).unwrap();
    let cfg = GlitchConfig::default();
    let offsets = [0, 2, 4];
    let widths: Vec<u32> = (1..=6).collect();
    let trials = 10_000;
    let g = run_glitch_campaign("rc_loss", &gt, &cfg, &offsets, &widths, trials, 0xBEEF).unwrap();
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    let mut rows = Vec::new();
    for &off in &offsets {
        let rates: Vec<f64> = widths.iter().map(|&w| g.cell(off, w).unwrap().reset_rate()).collect();
        for pair in rates.windows(2) {
            let (p1, p2) = (pair[0], pair[1]);
            let se = (p1 * (1.0 - p1) / trials as f64 + p2 * (1.0 - p2) / trials as f64).sqrt();
            let slack = p2 - p1 + Z99 * se;
            worst = worst.min(slack);
            if slack < 0.0 {
                violations += 1;
            }
        }
        rows.push(format!(
            "offset {off}: {}",
            rates.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(" ")
        ));
    }
    verdict(
        violations == 0,
        format!(
            "10000 trials/cell, widths 1..6, 99% two-sided binomial bound, {violations} violations (min slack {worst:.4}); {}",
            rows.join("; ")
        ),
    )
}

fn hash_dir(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let bytes = std::fs::read(&path).unwrap();
        out.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            hex::encode(Sha256::digest(&bytes)),
        );
    }
    out
}

fn fisim(args: &[&str], threads: &str) -> bool {
    Command::new(env!("CARGO_BIN_EXE_fisim"))
        .args(args)
        .args(["--threads", threads])
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn c9_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for id in ScenarioId::ALL {
        let out = tmp.path().join(format!("campaign-{id}"));
        let out_s = out.to_str().unwrap();
        let campaign = ["campaign", "--scenario", id.as_str(), "--out", out_s];
        let out_g = tmp.path().join(format!("glitch-{id}"));
        let out_gs = out_g.to_str().unwrap();
        let glitch = [
            "glitch",
            "--scenario",
            id.as_str(),
            "--offsets",
            "0..7",
            "--widths",
            "1,2,3",
            "--trials",
            "200",
            "--seed",
            "42",
            "--out",
            out_gs,
        ];
        let mut hashes = Vec::new();
        for threads in ["1", "4", "4"] {
            let ran = fisim(&campaign, threads) && fisim(&glitch, threads);
            ok &= ran;
            let mut h = hash_dir(&out);
            h.extend(hash_dir(&out_g));
            hashes.push(h);
        }
        let same = hashes.windows(2).all(|p| p[0] == p[1]);
        ok &= same && hashes[0].len() == 7;
        parts.push(format!(
            "{id}: {} files, {}",
            hashes[0].len(),
            if same { "identical" } else { "differ" }
        ));
    }
    verdict(ok, format!("3 runs each (1, 4, 4 threads); {}", parts.join("; ")))
}

/// A failsafe-shaped program whose symbol window is exactly 73 cycles.
fn seventy_three_cycle_target() -> Target {
    let mut src = String::from(
        "main:\n MOVI R8, #0x100\n LSL R8, R8, #8\n MOVI R9, #0x100\n ADD R9, R8, R9\n\
         LDR R2, [R8, #0]\n MOVI R5, #1\n MOVI R6, #1\n MOVI R7, #1\n TRIG\nwin_start:\n",
    );
    for k in 0..34 {
        src.push_str(&format!(" CMPI R2, #{}\n BEQ other\n", 100 + k));
    }
    src.push_str(
        " MOVI R4, #6\nstore:\n STR R4, [R9, #0]\n STR R5, [R9, #4]\n STR R6, [R9, #8]\n STR R7, [R9, #12]\n\
         win_end:\n HALT\nother:\n MOVI R4, #7\n B store\n .org 0x10000\n .word 2\n",
    );
    let (image, symbols) = assemble(&src).unwrap();
    Target {
        image,
        layout: MemoryLayout::default(),
        entry: 0,
        output_base: 0x1_0100,
        symbols,
    }
}

fn c10_scale() -> Verdict {
    let c = Campaign::between(seventy_three_cycle_target(), "win_start", "win_end", None).unwrap();
    let r = c.run_exhaustive("window73", &all_models(), true).unwrap();
    verdict(
        c.length() == 73 && r.total() == 101_105 && r.counts.total() == 101_105,
        format!(
            "window {} cycles, {} fault runs (expected 73, 101105), {} successful",
            c.length(),
            r.total(),
            r.counts.successes()
        ),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |n: u32, name: &str, limit: Duration, run: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = run();
        let elapsed = t.elapsed();
        let in_time = elapsed <= limit;
        let pass = v.pass && in_time;
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {n:>2} {:<28} {} ({:.2} s, limit {} s) {}",
            name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs(),
            v.detail
        );
    };
    let secs = Duration::from_secs;
    report(1, "fault-space counting", secs(5), &mut c1_fault_space);
    report(2, "golden agreement", secs(1), &mut c2_golden_agreement);

    let t = Instant::now();
    let runs = shipped_campaigns();
    let campaign_time = t.elapsed();
    report(3, "classification partition", secs(60 * 3), &mut || {
        let mut v = c3_partition(&runs);
        v.detail = format!("{} (campaigns {:.2} s)", v.detail, campaign_time.as_secs_f64());
        v
    });
    report(4, "NoAction reachability", secs(60), &mut || c4_no_action(&runs));
    report(5, "temporal clustering", secs(60), &mut || c5_clustering(&runs));
    report(6, "clock-ratio mapping", secs(1), &mut c6_clock_ratio);
    report(7, "glitch/campaign correlation", secs(300), &mut || {
        c7_correlation(&runs)
    });
    report(8, "width monotonicity", secs(300), &mut c8_width_monotonicity);
    report(9, "determinism", secs(120), &mut c9_determinism);
    report(10, "scale sanity (73 cycles)", secs(600), &mut c10_scale);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}
