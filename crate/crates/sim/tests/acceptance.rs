//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, ensure, Context, Result};
use chrono::{DateTime, TimeZone, Utc};
use ecg_api::{FeedConfig, Platform, PlatformConfig};
use ecg_core::dsp::{extract_window, remove_baseline, resample_linear, baseline_window_samples};
use ecg_core::inference::cnn::{forward_values, CnnModel};
use ecg_core::inference::fixture::{random_cnn, CnnPlan};
use ecg_core::inference::weights;
use ecg_core::{
    parse_payload, preprocess, AdapterConfig, DeviceKind, DspConfig, EcgRecording, ModelError, RawDeviceRecord,
    Registry, StudyId, WindowPolicy,
};
use ecg_lake::{Lake, LakeOptions, PutOutcome};
use ecg_pipeline::Clock;
use ecg_sim::models::small_plan;
use ecg_sim::{run_time_trials, BackgroundServer, SynthSpec, TrialMode, TrialOptions, VendorSim};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(rel: &str) -> PathBuf {
    root().join("fixtures").join(rel)
}

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 5, 2, 14, 0, 0).unwrap()
}

fn expected_cases() -> Result<Vec<Value>> {
    let v: Value = serde_json::from_slice(&std::fs::read(fixture("golden/expected.json"))?)?;
    v["cases"].as_array().cloned().ok_or_else(|| anyhow!("expected.json has no cases"))
}

fn http() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder().timeout(std::time::Duration::from_secs(30)).build().unwrap()
}

fn get_json(client: &reqwest::blocking::Client, url: &str) -> Result<(u16, Value)> {
    let resp = client.get(url).send()?;
    let status = resp.status().as_u16();
    Ok((status, serde_json::from_slice(&resp.bytes()?).with_context(|| format!("GET {url}: body is not JSON"))?))
}

// ---------------------------------------------------------------------------
// 1. turnaround table, injected delays

fn table_injected() -> Result<String> {
    let started = Instant::now();
    let mut lines = Vec::new();
    for (device, total, inference, upload) in [(DeviceKind::Kardia, 63.01, 11.49, 0.0), (DeviceKind::AppleWatch, 65.73, 13.51, 0.7)] {
        let report = run_time_trials(&TrialOptions::new(device, 40, TrialMode::Injected))?;
        ensure!(report.failed == 0, "{device}: {} of {} trials failed", report.failed, report.n);
        let m = report.means.ok_or_else(|| anyhow!("{device}: no means"))?;
        for (name, got, want) in [
            ("acquisition", m.acquisition_s, 30.0),
            ("upload", m.upload_s, upload),
            ("pickup", m.pickup_s, 19.17),
            ("inference", m.inference_s, inference),
            ("publish", m.publish_s, 2.35),
        ] {
            ensure!((got - want).abs() <= 0.01, "{device} {name}: {got} vs {want}");
        }
        ensure!((m.total_s - total).abs() <= 0.05, "{device} total {} vs {total}", m.total_s);
        for t in &report.trials {
            ensure!(t.statuses.last().map(String::as_str) == Some("done"), "{device} trial {}: {:?}", t.trial, t.statuses);
        }
        lines.push(format!("{device} {:.2}", m.total_s));
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.1} s");
    Ok(format!("{} in {secs:.2} s", lines.join(", ")))
}

// ---------------------------------------------------------------------------
// 2. polling cadence, measured stages

fn wall_pickup() -> Result<String> {
    let mut opts = TrialOptions::new(DeviceKind::Kardia, 200, TrialMode::Wall);
    opts.plan = small_plan();
    opts.seed = 2024;
    let report = run_time_trials(&opts)?;
    ensure!(report.failed == 0, "{} trials failed", report.failed);
    let pickups: Vec<f64> = report.trials.iter().filter_map(|t| t.timings.map(|x| x.pickup_s)).collect();
    let mean = pickups.iter().sum::<f64>() / pickups.len() as f64;
    let max = pickups.iter().cloned().fold(f64::MIN, f64::max);
    let min = pickups.iter().cloned().fold(f64::MAX, f64::min);
    ensure!((12.0..=18.0).contains(&mean), "mean pickup {mean:.2} s");
    // the simulated clock has no scheduling jitter
    ensure!(max <= 30.0 && min >= 0.0, "pickup range [{min}, {max}]");
    Ok(format!("200 arrivals, mean pickup {mean:.2} s, range [{min:.2}, {max:.2}] s"))
}

// ---------------------------------------------------------------------------
// 3. one Kardia record end to end over HTTP

fn end_to_end() -> Result<String> {
    let bytes = std::fs::read(fixture("golden/kardia.json"))?;
    let case = expected_cases()?.into_iter().find(|c| c["file"] == "kardia.json").ok_or_else(|| anyhow!("no kardia case"))?;
    let id = case["recording_id"].as_str().unwrap().to_string();

    // 3000 native samples, 15000 at 500 Hz, central 5000 starting at 10 s
    let reading = parse_payload(&bytes, &AdapterConfig::default())?;
    ensure!(reading.samples.len() == 3000, "{} native samples", reading.samples.len());
    let cleaned = remove_baseline(&reading.samples, baseline_window_samples(0.6, 100))?;
    let up = resample_linear(&cleaned, 100, 500)?;
    ensure!(up.len() == 15000, "{} resampled samples", up.len());
    let (cut, start_s) = extract_window(&up, WindowPolicy::Central)?;
    ensure!(cut.len() == 5000 && start_s == 10.0, "window {} at {start_s}", cut.len());

    let dir = tempfile::tempdir()?;
    let clock = Clock::simulated(t0());
    let vendor = Arc::new(VendorSim::new(DeviceKind::Kardia, clock.clone()));
    let feed = BackgroundServer::start(vendor.clone().router(), None)?;
    let mut config = PlatformConfig::default();
    config.lake.root = dir.path().join("lake");
    config.lake.sync = false;
    config.pipeline.models = Registry::descriptors_from_file(&fixture("models/models.toml"))?;
    config.feeds.push(FeedConfig { device: DeviceKind::Kardia, url: feed.url() });
    let platform = Platform::build_with_clock(config, clock.clone())?;
    let api = BackgroundServer::start(platform.router(), None)?;
    let client = http();
    let url = format!("{}/v1/results/{id}", api.url());

    vendor.push(t0() + chrono::Duration::seconds(5), "KARDIA-E2E", bytes);
    let sim = clock.sim().unwrap();
    sim.set(t0() + chrono::Duration::seconds(30));
    let mut statuses = Vec::new();
    let mut ticks = 0;
    // first tick: pull from the vendor, observe, then process
    ensure!(platform.orchestrator.fetch_feeds() == 1, "feed fetch did not land the record");
    let (code, body) = get_json(&client, &url)?;
    ensure!(code == 200, "GET results {code}");
    statuses.push(body["status"].as_str().unwrap_or("?").to_string());
    let final_body = loop {
        ensure!(ticks < 2, "no result within 2 ticks: {statuses:?}");
        platform.orchestrator.tick(None)?;
        ticks += 1;
        let (_, body) = get_json(&client, &url)?;
        statuses.push(body["status"].as_str().unwrap_or("?").to_string());
        if body["status"] != "pending" {
            break body;
        }
        sim.advance(30.0);
    };
    ensure!(statuses.first().map(String::as_str) == Some("pending"), "{statuses:?}");
    ensure!(final_body["status"] == "done", "{statuses:?}: {final_body}");

    let results = final_body["results"].as_array().unwrap();
    ensure!(results.len() == 3, "{} results", results.len());
    for r in results {
        let model = r["model_id"].as_str().unwrap();
        let (got, want) = (r["probability"].as_f64().unwrap(), case["probabilities"][model].as_f64().unwrap());
        ensure!((got - want).abs() < 1e-6, "{model}: {got} vs reference {want}");
    }
    let t = &final_body["timings"];
    let f = |k: &str| t[k].as_f64().unwrap();
    let sum = f("acquisition_s") + f("upload_s") + f("pickup_s") + f("inference_s") + f("publish_s");
    ensure!(f("acquisition_s") == 30.0, "acquisition {}", f("acquisition_s"));
    ensure!((f("total_s") - sum).abs() <= 1e-9, "total {} vs sum {sum}", f("total_s"));
    Ok(format!("{} in {ticks} tick(s), 3 models match reference, total {:.3} s", statuses.join("→"), f("total_s")))
}

// ---------------------------------------------------------------------------
// 4. model shape contract

fn expect_shape(err: ModelError, layer: &str) -> Result<()> {
    match err {
        ModelError::Shape { layer: got, .. } if got == layer => Ok(()),
        other => bail!("expected ModelShapeError({layer}), got {other}"),
    }
}

fn model_shapes() -> Result<String> {
    let bytes = std::fs::read(fixture("models/lvsd.ecgw"))?;
    let decoded = weights::decode::<f64>(&bytes)?;
    let chain = decoded.cnn.validate()?;
    ensure!(chain == vec![5000, 2500, 1250, 625, 312, 156, 78, 39], "length chain {chain:?}");
    ensure!(decoded.cnn.conv_output_length() == 39, "conv output length");
    ensure!(decoded.cnn.dense[0].in_dim == 39 * 64, "dense1 in_dim {}", decoded.cnn.dense[0].in_dim);

    let base = decoded.cnn;
    let mut checked = 0;
    // structurally consistent files whose plan is broken at one layer
    for i in 0..7 {
        let mut m = base.clone();
        let l = &mut m.conv[i];
        l.in_channels += 1;
        l.weight = vec![0.1; l.out_channels * l.in_channels * l.kernel_length];
        let err = weights::decode::<f64>(&weights::encode(&m, None)).err().ok_or_else(|| anyhow!("conv{} accepted", i + 1))?;
        expect_shape(err, &format!("conv{}", i + 1))?;
        checked += 1;

        let mut m = base.clone();
        m.conv[i].pool_length = 3;
        expect_shape(m.validate().unwrap_err(), &format!("conv{}", i + 1))?;
        checked += 1;
    }
    for j in 0..2 {
        let mut m = base.clone();
        let d = &mut m.dense[j];
        d.in_dim += 1;
        d.weight = vec![0.1; d.in_dim * d.out_dim];
        let err = weights::decode::<f64>(&weights::encode(&m, None)).err().ok_or_else(|| anyhow!("dense{} accepted", j + 1))?;
        expect_shape(err, &format!("dense{}", j + 1))?;
        checked += 1;
    }
    let mut m = base.clone();
    m.output.in_dim += 1;
    m.output.weight.push(0.1);
    expect_shape(weights::decode::<f64>(&weights::encode(&m, None)).unwrap_err(), "output")?;
    checked += 1;

    // header edits that no longer match the stored tensors
    let header = weights::read_header(&bytes)?;
    for i in 0..7 {
        let mut h = header.clone();
        h.conv[i].out_channels += 1;
        expect_shape(weights::decode::<f64>(&weights::replace_header(&bytes, &h)?).unwrap_err(), &format!("conv{}", i + 1))?;
        let mut h = header.clone();
        h.conv[i].kernel_length += 2;
        expect_shape(weights::decode::<f64>(&weights::replace_header(&bytes, &h)?).unwrap_err(), &format!("conv{}", i + 1))?;
        checked += 2;
    }
    let mut h = header.clone();
    h.dense[1].out_dim = 31;
    expect_shape(weights::decode::<f64>(&weights::replace_header(&bytes, &h)?).unwrap_err(), "dense2")?;
    checked += 1;
    Ok(format!("default plan → 39 × 64, {checked} single-layer perturbations rejected with the layer named"))
}

// ---------------------------------------------------------------------------
// 5. numerical oracles

/// Direct loops over an explicitly zero-padded copy of each channel.
fn naive_logit(m: &CnnModel<f64>, input: &[f64]) -> f64 {
    let eps = m.bn_eps;
    let mut x: Vec<Vec<f64>> = vec![input.to_vec()];
    for l in &m.conv {
        let (k, left) = (l.kernel_length, (l.kernel_length - 1) / 2);
        let len = x[0].len();
        let mut next = Vec::new();
        for o in 0..l.out_channels {
            let mut act = Vec::with_capacity(len);
            for i in 0..len {
                let mut s = l.bias[o];
                for (c, row) in x.iter().enumerate() {
                    for j in 0..k {
                        let p = i as isize + j as isize - left as isize;
                        if p >= 0 && (p as usize) < len {
                            s += l.weight[(o * l.in_channels + c) * k + j] * row[p as usize];
                        }
                    }
                }
                let y = (s - l.bn.mean[o]) / (l.bn.var[o] + eps).sqrt() * l.bn.gamma[o] + l.bn.beta[o];
                act.push(y.max(0.0));
            }
            next.push((0..len / 2).map(|i| act[2 * i].max(act[2 * i + 1])).collect::<Vec<_>>());
        }
        x = next;
    }
    let mut h: Vec<f64> = (0..x[0].len()).flat_map(|i| x.iter().map(move |row| row[i])).collect();
    for d in &m.dense {
        let bn = d.bn.as_ref().unwrap();
        h = (0..d.out_dim)
            .map(|o| {
                let s = d.bias[o] + (0..d.in_dim).map(|i| d.weight[o * d.in_dim + i] * h[i]).sum::<f64>();
                ((s - bn.mean[o]) / (bn.var[o] + eps).sqrt() * bn.gamma[o] + bn.beta[o]).max(0.0)
            })
            .collect();
    }
    m.output.bias[0] + h.iter().zip(&m.output.weight).map(|(a, b)| a * b).sum::<f64>()
}

fn numerics() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let layers = rng.random_range(1..=3usize);
        let plan = CnnPlan {
            input_length: rng.random_range((1usize << layers)..=48),
            channels: (0..layers).map(|_| rng.random_range(1..=4)).collect(),
            kernels: (0..layers).map(|_| rng.random_range(1..=7)).collect(),
            dense: vec![rng.random_range(1..=4), rng.random_range(1..=4)],
        };
        let m = random_cnn::<f64>("tiny", &plan, case);
        let x: Vec<f64> = (0..plan.input_length).map(|_| rng.random_range(-3.0..3.0)).collect();
        let got = forward_values(&m, &x)?.logit;
        let want = naive_logit(&m, &x);
        worst = worst.max((got - want).abs());
        ensure!((got - want).abs() <= 1e-9, "case {case} {plan:?}: {got} vs {want}");
    }

    let hand = resample_linear(&[1.0f64, 2.0, 3.0], 1, 2)?;
    ensure!(hand == vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.0], "resample [1,2,3] 1→2 Hz gave {hand:?}");

    for i in 0..1000 {
        let n = rng.random_range(2..400usize);
        let src = [100u32, 250, 360, 500, 1000][i % 5];
        let sig: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let out = resample_linear(&sig, src, 500)?;
        let (lo, hi) = sig.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        ensure!(out.iter().all(|v| *v >= lo && *v <= hi), "signal {i} overshoots [{lo}, {hi}]");
    }

    let study = StudyId::try_from("0".repeat(StudyId::HEX_LEN)).unwrap();
    let mut stats = Vec::new();
    for name in ["kardia.json", "apple_watch.ecg.xml", "fitbit.json"] {
        let rec = parse_payload(&std::fs::read(fixture(&format!("golden/{name}")))?, &AdapterConfig::default())?
            .into_recording(study.clone(), t0());
        let w = preprocess::<f64>(&rec, &DspConfig::default())?;
        let n = w.values().len() as f64;
        let mean = w.values().iter().sum::<f64>() / n;
        let sd = (w.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        ensure!(mean.abs() < 1e-9 && (sd - 1.0).abs() < 1e-6, "{name}: mean {mean:e}, sd {sd}");
        stats.push(format!("{:.0e}", mean.abs().max(1e-18)));
    }
    Ok(format!("200 tiny CNNs within {worst:.1e}, resample hand case exact, 1000 signals bounded, z-score |mean| ≤ {}", stats.join("/")))
}

// ---------------------------------------------------------------------------
// 6. storage

fn reading_pair(lake: &Lake, external_id: &str, bytes: Vec<u8>) -> Result<(RawDeviceRecord, EcgRecording)> {
    let study = lake.register_study(external_id)?;
    let reading = parse_payload(&bytes, &AdapterConfig::default())?;
    let raw = RawDeviceRecord {
        device: reading.device,
        bytes,
        source_uri: "test://acceptance".into(),
        fetched_at: t0(),
        available_at: None,
    };
    Ok((raw, reading.into_recording(study, t0())))
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            walk(&p, out)
        } else {
            out.push(p)
        }
    }
}

fn storage() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let lake = Arc::new(Lake::open_with(dir.path(), LakeOptions { sync: false })?);

    let (raw, rec) = reading_pair(&lake, "MRN-ACCEPT-7", std::fs::read(fixture("golden/kardia.json"))?)?;
    ensure!(matches!(lake.put_recording(&raw, &rec)?, PutOutcome::Inserted(_)), "first put not inserted");
    let index_before: Vec<_> = lake.list_since(0)?;
    let dup = lake.put_recording(&raw, &rec)?;
    ensure!(matches!(&dup, PutOutcome::AlreadyExists(e) if e.index_seq == 1), "second put: {dup:?}");
    ensure!(lake.list_since(0)? == index_before, "index changed on duplicate");
    ensure!(lake.read_blob(&rec.recording_id)? == raw.bytes, "blob differs from the uploaded bytes");

    let handles: Vec<_> = (0..2)
        .map(|w| {
            let lake = lake.clone();
            std::thread::spawn(move || -> Result<()> {
                for i in 0..500u64 {
                    let spec = SynthSpec { duration_s: 30.0, ..SynthSpec::seeded(1_000_000 * (w + 1) + i) };
                    let (raw, rec) = reading_pair(&lake, &format!("MRN-W{w}"), spec.payload(DeviceKind::Kardia, t0()))?;
                    ensure!(!lake.put_recording(&raw, &rec)?.is_duplicate(), "writer {w} item {i} deduped");
                }
                Ok(())
            })
        })
        .collect();
    for h in handles {
        h.join().map_err(|_| anyhow!("writer panicked"))??;
    }
    let seqs: Vec<u64> = lake.list_since(0)?.iter().map(|e| e.index_seq).collect();
    ensure!(seqs == (1..=1001).collect::<Vec<_>>(), "index has gaps or repeats ({} rows)", seqs.len());
    drop(lake);
    let reopened = Lake::open(dir.path())?;
    ensure!(reopened.len() == 1001, "reopened lake has {} rows", reopened.len());

    let mut files = Vec::new();
    walk(dir.path(), &mut files);
    let mut holders = Vec::new();
    for f in &files {
        let text = String::from_utf8_lossy(&std::fs::read(f)?).into_owned();
        if ["MRN-ACCEPT-7", "MRN-W0", "MRN-W1"].iter().any(|m| text.contains(m)) {
            holders.push(f.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    ensure!(holders == vec!["registry.json".to_string()], "external ids found in {holders:?}");
    Ok(format!("dedupe keeps index, 2×500 writers gap-free, blob byte-exact, external ids only in registry.json ({} files scanned)", files.len()))
}

// ---------------------------------------------------------------------------
// 7. API conformance

fn validator(name: &str) -> Result<jsonschema::Validator> {
    let path = root().join("crates/api/schemas").join(format!("{name}.json"));
    let schema: Value = serde_json::from_slice(&std::fs::read(&path)?)?;
    jsonschema::validator_for(&schema).map_err(|e| anyhow!("{name}: {e}"))
}

fn conforms(name: &str, v: &Value) -> Result<()> {
    let errors: Vec<String> = validator(name)?.iter_errors(v).map(|e| format!("{e} at {}", e.instance_path())).collect();
    ensure!(errors.is_empty(), "{name}: {errors:?}");
    Ok(())
}

fn api_conformance() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let mut config = PlatformConfig::default();
    config.lake.root = dir.path().join("lake");
    config.lake.sync = false;
    config.pipeline.models = Registry::descriptors_from_file(&fixture("models/models.toml"))?;
    let platform = Platform::build_with_clock(config, Clock::simulated(t0()))?;
    let api = BackgroundServer::start(platform.router(), None)?;
    let base = api.url();
    let client = http();
    let post = |device: &str, bytes: Vec<u8>| -> Result<(u16, Value)> {
        let resp = client
            .post(format!("{base}/v1/recordings"))
            .header("X-Device-Kind", device)
            .header("X-External-Id", "MRN-API-1")
            .body(bytes)
            .send()?;
        let status = resp.status().as_u16();
        Ok((status, serde_json::from_slice(&resp.bytes()?)?))
    };

    let watch = std::fs::read(fixture("golden/apple_watch.ecg.xml"))?;
    let (s, created) = post("apple_watch", watch.clone())?;
    ensure!(s == 201 && created["duplicate"] == false, "create {s}: {created}");
    conforms("ingest_response", &created)?;
    let (s, dup) = post("apple_watch", watch)?;
    ensure!(s == 200 && dup["duplicate"] == true, "duplicate {s}: {dup}");
    conforms("ingest_response", &dup)?;
    let (s, bad) = post("kardia", b"{\"not\":\"an ecg\"}".to_vec())?;
    ensure!(s == 422, "unparseable payload gave {s}");
    conforms("error", &bad)?;

    let id = created["recording_id"].as_str().unwrap();
    let study = created["study_id"].as_str().unwrap();
    let (s, pending) = get_json(&client, &format!("{base}/v1/results/{id}"))?;
    ensure!(s == 200 && pending["status"] == "pending", "{s}: {pending}");
    conforms("results", &pending)?;
    platform.orchestrator.tick(None)?;

    let mut checked = vec!["ingest_response", "error", "results"];
    for (path, schema) in [
        ("/v1/recordings".to_string(), "recording_list"),
        ("/v1/recordings?since=0&device=apple_watch".to_string(), "recording_list"),
        (format!("/v1/recordings/{id}"), "recording"),
        (format!("/v1/recordings/{id}/waveform"), "waveform"),
        (format!("/v1/results/{id}"), "results"),
        (format!("/v1/studies/{study}/timeline"), "timeline"),
        ("/v1/health".to_string(), "health"),
    ] {
        let (s, body) = get_json(&client, &format!("{base}{path}"))?;
        ensure!(s == 200, "GET {path} gave {s}: {body}");
        conforms(schema, &body).with_context(|| format!("GET {path}"))?;
        checked.push(schema);
    }
    let (_, done) = get_json(&client, &format!("{base}/v1/results/{id}"))?;
    ensure!(done["status"] == "done" && done["results"].as_array().map(Vec::len) == Some(3), "{done}");

    let missing = "0".repeat(64);
    for path in [
        format!("/v1/results/{missing}"),
        format!("/v1/recordings/{missing}"),
        format!("/v1/recordings/{missing}/waveform"),
        "/v1/recordings/not-an-id".to_string(),
        format!("/v1/studies/{}/timeline", "0".repeat(24)),
        "/v1/nowhere".to_string(),
    ] {
        let (s, body) = get_json(&client, &format!("{base}{path}"))?;
        ensure!(s == 404, "GET {path} gave {s}");
        conforms("error", &body)?;
    }
    let text = reqwest::blocking::get(format!("{base}/v1/recordings"))?.text()?;
    ensure!(!text.contains("MRN-API-1"), "external id leaked into a response");
    checked.sort();
    checked.dedup();
    Ok(format!("{} schemas validated, 201/200 duplicate, 422, six 404s", checked.len()))
}

// ---------------------------------------------------------------------------

type Criterion = (&'static str, fn() -> Result<String>);

fn main() {
    let criteria: [Criterion; 7] = [
        ("turnaround table (injected delays)", table_injected),
        ("polling cadence (measured, 30 s interval)", wall_pickup),
        ("end-to-end Kardia record", end_to_end),
        ("model shape contract", model_shapes),
        ("numerical oracles", numerics),
        ("storage guarantees", storage),
        ("API conformance", api_conformance),
    ];
    // panics are reported on the criterion line
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(anyhow!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name} [{secs:.2}s]: {detail}", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL {} {name} [{secs:.2}s]: {e:#}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
