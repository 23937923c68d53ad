//! One function per subcommand. Each writes its artifacts into `dir` and
//! returns the rows it wrote.

use std::io::BufReader;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wiretap_core::autodiff::{
    compare_with_finite_differences, grad_check, weighted_sum_loss, Activation, GradCheckReport, GradFault, LayerSpec,
    Network, Parameterized, Tensor, FD_STEP,
};
use wiretap_core::channel::ChannelSpec;
use wiretap_core::mi::MAX_ENUMERATION;
use wiretap_core::models::{sample_bits_st, straight_through_backward, ModelConfig};
use wiretap_core::oracle::{frontier_sweep, FrontierPoint};
use wiretap_core::source::{
    encode_dataset, make_discrete_system, DiscreteKind, MAX_CODE_BITS, MAX_S_CARD, NUM_T_CLASSES,
};
use wiretap_core::training::{
    draw_noise, load_models, save_models, total_loss, JsccModels, NoiseMode, TrainConfig, TrainError, TrainHistory,
};

use crate::config::ExperimentConfig;
use crate::grid::ppm_grid;
use crate::output::{fmt_f64, write_atomic, Table};
use crate::pipeline::{
    band_reconstructions, evaluate_bands, evaluate_cell, evaluate_reconstructions, load_samples, load_splits,
    parallel_map, train, with_eve_noise, BandMetrics, CellMetrics,
};
use crate::plot::{LineChart, Series};
use crate::CliError;

pub const HISTORY_HEADER: [&str; 6] = ["epoch", "distortion_per_image", "decoder_ll", "eve_bound", "total", "eve_accuracy"];
pub const METRICS_HEADER: [&str; 13] = [
    "lambda",
    "eps_b",
    "eps_e",
    "seed",
    "bob_distortion",
    "eve_distortion",
    "constant_distortion",
    "mine_leakage_bits",
    "adv_t",
    "adv_color",
    "adv_thickness",
    "bob_recon_t_acc",
    "eve_recon_t_acc",
];
pub const PUT_HEADER: [&str; 10] =
    ["lambda", "eps_b", "eps_e", "seed", "distortion", "mine_leakage_bits", "adv_t", "adv_color", "adv_thickness", "status"];
pub const PARALLEL_HEADER: [&str; 9] =
    ["band", "start", "end", "eps_b", "eps_e", "mine_leakage_bits", "adv_t", "adv_color", "adv_thickness"];
pub const FRONTIER_HEADER: [&str; 6] = ["lambda", "distortion", "mi_bob", "mi_eve_leakage", "objective", "restarts_used"];

fn image_rows(t: &Tensor, count: usize) -> Vec<Vec<f64>> {
    (0..count.min(t.rows())).map(|i| t.row(i).to_vec()).collect()
}

fn grid_bytes(rows: &[Vec<Vec<f64>>], columns: usize, size: usize) -> Vec<u8> {
    let refs: Vec<Vec<&[f64]>> = rows.iter().map(|r| r.iter().take(columns).map(Vec::as_slice).collect()).collect();
    ppm_grid(&refs, size)
}

pub fn gen_data(cfg: &ExperimentConfig, dir: &Path) -> Result<(usize, usize), CliError> {
    let (train, test) = load_samples(cfg)?;
    write_atomic(&dir.join("train.bin"), &encode_dataset(&train)?)?;
    write_atomic(&dir.join("test.bin"), &encode_dataset(&test)?)?;
    // one row per class, first examples found in the training split
    let mut rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); NUM_T_CLASSES];
    for g in &train {
        let row = &mut rows[usize::from(g.t_label)];
        if row.len() < cfg.evaluation.grid_columns {
            row.push(g.pixels.clone());
        }
    }
    write_atomic(&dir.join("preview.ppm"), &grid_bytes(&rows, cfg.evaluation.grid_columns, cfg.dataset.size))?;
    Ok((train.len(), test.len()))
}

fn history_table(history: &TrainHistory) -> Table {
    let mut t = Table::new(&HISTORY_HEADER);
    for r in &history.records {
        t.row(&[
            r.epoch.to_string(),
            fmt_f64(r.distortion_per_image),
            fmt_f64(r.decoder_ll),
            fmt_f64(r.eve_bound),
            fmt_f64(r.total),
            fmt_f64(r.eve_accuracy),
        ]);
    }
    t
}

fn checkpoint_bytes(models: &JsccModels, cfg: &TrainConfig) -> Result<Vec<u8>, TrainError> {
    let mut buf = Vec::new();
    save_models(models, cfg, &mut buf)?;
    Ok(buf)
}

/// Trains one model. On divergence the completed epochs are still written.
pub fn train_model(cfg: &ExperimentConfig, dir: &Path) -> Result<TrainHistory, CliError> {
    let data = load_splits(cfg)?;
    let tcfg = cfg.train_config();
    write_atomic(&dir.join("config.toml"), cfg.to_toml().as_bytes())?;
    let every = cfg.training.checkpoint_every;
    let result = train(&tcfg, &data, |epoch, models, _| {
        if every > 0 && (epoch + 1) % every == 0 && epoch + 1 < tcfg.epochs {
            let bytes = checkpoint_bytes(models, &tcfg)?;
            write_atomic(&dir.join(format!("epoch_{:04}.ckpt", epoch + 1)), &bytes)
                .map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        }
        Ok(())
    });
    match result {
        Ok(trained) => {
            history_table(&trained.history).write(&dir.join("history.csv"))?;
            write_atomic(&dir.join("model.ckpt"), &checkpoint_bytes(&trained.models, &tcfg)?)?;
            Ok(trained.history)
        }
        Err((err, history)) => {
            history_table(&history).write(&dir.join("history.csv"))?;
            Err(err)
        }
    }
}

pub struct EvalRow {
    pub lambda: f64,
    pub channel: ChannelSpec,
    pub cell: CellMetrics,
    pub eve_distortion: f64,
    pub constant_distortion: f64,
    pub bob_recon_t_acc: f64,
    pub eve_recon_t_acc: f64,
}

/// Evaluates a checkpoint on the configured test split. Channel and λ come
/// from the checkpoint.
pub fn eval(cfg: &ExperimentConfig, checkpoint: &Path, dir: &Path) -> Result<EvalRow, CliError> {
    let file = std::fs::File::open(checkpoint).map_err(|e| CliError::Io(format!("{}: {e}", checkpoint.display())))?;
    let (models, model_cfg, channel, lambda) = load_models(BufReader::new(file))?;
    let data = load_splits(cfg)?;
    if model_cfg.image_len != data.test.image_len() {
        return Err(CliError::Usage(format!(
            "checkpoint expects {} values per image, dataset has {}",
            model_cfg.image_len,
            data.test.image_len()
        )));
    }
    let seed = cfg.training.seed;
    let cell = evaluate_cell(cfg, &models, &channel, &data, seed)?;
    let recon = evaluate_reconstructions(cfg, &models, &channel, &data, seed)?;
    let row = EvalRow {
        lambda,
        cell,
        eve_distortion: recon.eve_distortion,
        constant_distortion: recon.constant_distortion,
        bob_recon_t_acc: recon.bob_recon.t_accuracy,
        eve_recon_t_acc: recon.eve_recon.t_accuracy,
        channel,
    };
    let mut t = Table::new(&METRICS_HEADER);
    let (eps_b, eps_e) = single_band_eps(&row.channel);
    t.row(&[
        fmt_f64(lambda),
        eps_b,
        eps_e,
        seed.to_string(),
        fmt_f64(cell.bob_distortion),
        fmt_f64(row.eve_distortion),
        fmt_f64(row.constant_distortion),
        fmt_f64(cell.mine_leakage_bits),
        fmt_f64(cell.adversary.t_accuracy),
        fmt_f64(cell.adversary.color_accuracy),
        fmt_f64(cell.adversary.thickness_accuracy),
        fmt_f64(row.bob_recon_t_acc),
        fmt_f64(row.eve_recon_t_acc),
    ]);
    t.write(&dir.join("metrics.csv"))?;
    let n = cfg.evaluation.grid_columns;
    let rows = [image_rows(&data.test.images, n), recon.bob_test[..n.min(recon.bob_test.len())].to_vec(), recon.eve_test[..n.min(recon.eve_test.len())].to_vec()];
    write_atomic(&dir.join("grid.ppm"), &grid_bytes(&rows, n, cfg.dataset.size))?;
    Ok(row)
}

/// Band crossovers as table fields; multi-band channels list them joined by `;`.
fn single_band_eps(channel: &ChannelSpec) -> (String, String) {
    let join = |f: fn(&wiretap_core::channel::BandSpec) -> f64| {
        channel.bands().iter().map(|b| fmt_f64(f(b))).collect::<Vec<_>>().join(";")
    };
    (join(|b| b.epsilon_b), join(|b| b.epsilon_e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub eps_e: f64,
    pub seed: u64,
    /// `None` when training or evaluation of the cell failed.
    pub metrics: Option<CellMetrics>,
    pub status: String,
}

/// Trains and evaluates every (λ, ε_E, seed) cell. A failing cell is
/// recorded and the sweep continues.
pub fn sweep(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<SweepRow>, CliError> {
    let s = &cfg.sweep;
    if s.lambdas.is_empty() {
        eprintln!("warning: empty lambda grid; writing an empty table");
    }
    let base = cfg.channel.spec()?;
    let cells: Vec<(f64, f64, u64)> = s
        .lambdas
        .iter()
        .flat_map(|&l| s.eps_e.iter().flat_map(move |&e| s.seeds.iter().map(move |&seed| (l, e, seed))))
        .collect();
    let data = if cells.is_empty() { None } else { Some(load_splits(cfg)?) };
    let rows = parallel_map(&cells, s.jobs, |&(lambda, eps_e, seed)| {
        let run = || -> Result<CellMetrics, CliError> {
            let data = data.as_ref().expect("loaded for nonempty grids");
            let channel = with_eve_noise(&base, eps_e)?;
            let mut tcfg = cfg.train_config();
            tcfg.lambda = lambda;
            tcfg.seed = seed;
            tcfg.channel = channel.clone();
            let trained = train(&tcfg, data, |_, _, _| Ok(())).map_err(|(e, _)| e)?;
            evaluate_cell(cfg, &trained.models, &channel, data, seed)
        };
        let (metrics, status) = match run() {
            Ok(m) => (Some(m), "ok".to_string()),
            Err(e) => {
                eprintln!("cell lambda={lambda} eps_e={eps_e} seed={seed} failed: {e}");
                (None, format!("failed: {e}"))
            }
        };
        SweepRow { lambda, eps_e, seed, metrics, status }
    });
    let eps_b = base.bands().iter().map(|b| fmt_f64(b.epsilon_b)).collect::<Vec<_>>().join(";");
    let mut t = Table::new(&PUT_HEADER);
    for r in &rows {
        let m = r.metrics;
        let f = |g: fn(&CellMetrics) -> f64| fmt_f64(m.as_ref().map_or(f64::NAN, g));
        t.row(&[
            fmt_f64(r.lambda),
            eps_b.clone(),
            fmt_f64(r.eps_e),
            r.seed.to_string(),
            f(|c| c.bob_distortion),
            f(|c| c.mine_leakage_bits),
            f(|c| c.adversary.t_accuracy),
            f(|c| c.adversary.color_accuracy),
            f(|c| c.adversary.thickness_accuracy),
            r.status.clone(),
        ]);
    }
    t.write(&dir.join("put.csv"))?;
    write_atomic(&dir.join("put.svg"), put_chart(&rows, &s.lambdas, &s.eps_e).to_svg().as_bytes())?;
    Ok(rows)
}

/// Mean over seeds of the successful cells of one (λ, ε_E) pair.
pub fn cell_mean(rows: &[SweepRow], lambda: f64, eps_e: f64, f: fn(&CellMetrics) -> f64) -> Option<f64> {
    let v: Vec<f64> = rows.iter().filter(|r| r.lambda == lambda && r.eps_e == eps_e).filter_map(|r| r.metrics.as_ref().map(f)).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn put_chart(rows: &[SweepRow], lambdas: &[f64], eps_e: &[f64]) -> LineChart {
    let series = eps_e
        .iter()
        .map(|&e| Series {
            name: format!("eps_E = {e}"),
            points: lambdas
                .iter()
                .filter_map(|&l| Some((cell_mean(rows, l, e, |c| c.bob_distortion)?, cell_mean(rows, l, e, |c| c.mine_leakage_bits)?)))
                .collect(),
        })
        .collect();
    LineChart {
        title: "Privacy-utility trade-off over lambda".into(),
        x_label: "Bob distortion per image".into(),
        y_label: "Eve leakage (bits)".into(),
        series,
    }
}

/// Trains over a banded channel and reports each band's leakage.
pub fn parallel(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<BandMetrics>, CliError> {
    let channel = cfg.channel.spec()?;
    if channel.bands().len() < 2 {
        return Err(CliError::Usage(
            "parallel needs at least two bands (--bands w:eb:ee,w:eb:ee,...); use sweep for a single channel".into(),
        ));
    }
    let data = load_splits(cfg)?;
    let tcfg = cfg.train_config();
    let trained = train(&tcfg, &data, |_, _, _| Ok(())).map_err(|(e, _)| e)?;
    let seed = cfg.training.seed;
    let bands = evaluate_bands(cfg, &trained.models, &channel, &data, seed)?;
    let mut t = Table::new(&PARALLEL_HEADER);
    for b in &bands {
        t.row(&[
            b.band.to_string(),
            b.start.to_string(),
            b.end.to_string(),
            fmt_f64(b.eps_b),
            fmt_f64(b.eps_e),
            fmt_f64(b.mine_leakage_bits),
            fmt_f64(b.adversary.t_accuracy),
            fmt_f64(b.adversary.color_accuracy),
            fmt_f64(b.adversary.thickness_accuracy),
        ]);
    }
    t.write(&dir.join("parallel.csv"))?;
    let n = cfg.evaluation.grid_columns;
    let recon = evaluate_reconstructions(cfg, &trained.models, &channel, &data, seed)?;
    let mut rows = vec![image_rows(&data.test.images, n), recon.bob_test.into_iter().take(n).collect(), recon.eve_test.into_iter().take(n).collect()];
    rows.extend(band_reconstructions(cfg, &trained.models, &channel, &data, n, seed)?);
    write_atomic(&dir.join("grid.ppm"), &grid_bytes(&rows, n, cfg.dataset.size))?;
    Ok(bands)
}

/// Exact frontier on the correlated-bits system. Equal crossovers are the
/// privacy-funnel regime.
pub fn oracle(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<FrontierPoint>, CliError> {
    let o = &cfg.oracle;
    let s_card = 1usize.checked_shl(o.m as u32).unwrap_or(usize::MAX);
    if o.m == 0 || o.m > MAX_CODE_BITS || s_card > MAX_S_CARD {
        return Err(CliError::Usage(format!(
            "oracle.m = {} is too large: sources have at most {MAX_S_CARD} symbols and codewords at most {MAX_CODE_BITS} bits",
            o.m
        )));
    }
    if s_card.saturating_mul(s_card) > MAX_ENUMERATION {
        return Err(CliError::Usage(format!("|S| * 2^n = {} exceeds the enumeration bound {MAX_ENUMERATION}", s_card * s_card)));
    }
    let sys = make_discrete_system(DiscreteKind::CorrelatedBits { m: o.m, sensitive_bit: o.sensitive_bit }, o.seed)?;
    let spec = ChannelSpec::single(o.m, o.eps_b, o.eps_e).map_err(|e| CliError::Usage(e.to_string()))?;
    let points = frontier_sweep(&sys, &spec, &o.lambdas, &cfg.oracle_config())?;
    let pool = o.restarts * o.lambdas.len();
    let mut t = Table::new(&FRONTIER_HEADER);
    for p in &points {
        t.row(&[
            fmt_f64(p.lambda),
            fmt_f64(p.terms.distortion),
            fmt_f64(p.terms.utility),
            fmt_f64(p.terms.leakage),
            fmt_f64(p.terms.objective),
            pool.to_string(),
        ]);
    }
    t.write(&dir.join("frontier.csv"))?;
    let chart = LineChart {
        title: format!("Exact frontier, eps_B = {}, eps_E = {}", o.eps_b, o.eps_e),
        x_label: "I(T; Y_E) (bits)".into(),
        y_label: "I(S; Y_B) (bits)".into(),
        series: vec![Series { name: "optimum".into(), points: points.iter().map(|p| (p.terms.leakage, p.terms.utility)).collect() }],
    };
    write_atomic(&dir.join("frontier.svg"), chart.to_svg().as_bytes())?;
    Ok(points)
}

/// One named gradient check.
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

const GRAD_TOL: f64 = 1e-4;
const CORRUPTION: GradFault = GradFault::ScaleFirstWeightGrad(1.5);

fn line(name: impl Into<String>, report: &GradCheckReport) -> CheckLine {
    CheckLine {
        name: name.into(),
        passed: report.passed,
        detail: format!("max rel err {:.2e} over {} params", report.max_rel_error, report.checked),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect()).expect("sized")
}

/// Finite-difference checks of every layer type, the three model networks,
/// the full training loss and the straight-through sampler. `corrupt`
/// scales one analytic gradient in every finite-difference check.
pub fn gradcheck(corrupt: bool) -> Result<Vec<CheckLine>, CliError> {
    let fault = corrupt.then_some(CORRUPTION);
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for act in Activation::ALL {
        let mut net = Network::new(5, &[LayerSpec::new(6, Activation::Tanh), LayerSpec::new(4, act)], &mut rng)?;
        net.set_fault(fault);
        let x = random_matrix(&mut rng, 7, 5, -1.0, 1.0);
        let w = random_matrix(&mut rng, 7, 4, -1.0, 1.0);
        out.push(line(format!("layer {}", act.name()), &grad_check(&mut net, &x, weighted_sum_loss(&w), GRAD_TOL)));
    }

    let model = ModelConfig { image_len: 12, n_bits: 6, t_classes: 3, encoder_hidden: vec![7], decoder_hidden: vec![7], eve_hidden: vec![5] };
    let mut models = JsccModels::new(&model, &mut rng)?;
    let images = random_matrix(&mut rng, 6, 12, 0.0, 1.0);
    let bits = random_matrix(&mut rng, 6, 6, 0.0, 1.0);
    for (name, net, input, width) in [
        ("encoder", &mut models.encoder.net, &images, 6),
        ("decoder", &mut models.decoder.net, &bits, 12),
        ("eve classifier", &mut models.eve.net, &bits, 3),
    ] {
        net.set_fault(fault);
        let w = random_matrix(&mut rng, 6, width, -1.0, 1.0);
        out.push(line(name, &grad_check(net, input, weighted_sum_loss(&w), GRAD_TOL)));
        net.set_fault(None);
    }

    let channel = ChannelSpec::equal_bands(6, &[(0.1, 0.3), (0.05, 0.0)]).map_err(|e| CliError::Usage(e.to_string()))?;
    let labels: Vec<usize> = (0..6).map(|i| i % 3).collect();
    let h_t = 3f64.ln();
    for lambda in [0.0, 20.0] {
        let mut tcfg = TrainConfig::new(channel.clone(), model.clone());
        tcfg.lambda = lambda;
        let noise = draw_noise(&images, &models, &channel, &mut rng)?;
        models.encoder.net.set_fault(fault);
        total_loss(&images, &labels, &mut models, &tcfg, h_t, NoiseMode::Replay(&noise), &mut rng)?;
        models.encoder.net.set_fault(None);
        let analytic: Vec<Vec<Tensor>> = models.param_stores().iter().map(|s| s.gradients()).collect();
        let report = compare_with_finite_differences(
            &mut models,
            &analytic,
            |m| {
                total_loss(&images, &labels, m, &tcfg, h_t, NoiseMode::Replay(&noise), &mut ChaCha8Rng::seed_from_u64(0))
                    .map_or(f64::NAN, |l| l.total)
            },
            FD_STEP,
            GRAD_TOL,
        );
        out.push(line(format!("full loss, lambda {lambda}"), &report));
    }

    // straight-through: unbiased samples, identity backward
    let p = Tensor::matrix(1, 4, vec![0.05, 0.3, 0.5, 0.9]).expect("sized");
    let draws = 20_000;
    let mut sums = [0.0; 4];
    for _ in 0..draws {
        let x = sample_bits_st(&p, &mut rng)?;
        sums.iter_mut().zip(x.data()).for_each(|(s, v)| *s += v);
    }
    let worst_z = sums
        .iter()
        .zip(p.data())
        .map(|(s, &pi)| (s / f64::from(draws) - pi).abs() / (pi * (1.0 - pi) / f64::from(draws)).sqrt())
        .fold(0.0, f64::max);
    let grad = random_matrix(&mut rng, 1, 4, -1.0, 1.0);
    let identity = straight_through_backward(&grad) == grad;
    out.push(CheckLine {
        name: "straight-through sampler".into(),
        passed: worst_z < 4.0 && identity,
        detail: format!("worst mean deviation {worst_z:.2} sigma, identity backward {identity}"),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers_have_no_duplicates() {
        for h in [&HISTORY_HEADER[..], &METRICS_HEADER, &PUT_HEADER, &PARALLEL_HEADER, &FRONTIER_HEADER] {
            let mut v = h.to_vec();
            v.sort_unstable();
            v.dedup();
            assert_eq!(v.len(), h.len());
        }
    }
}
