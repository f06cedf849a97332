use serde_json::{json, Value};
use tvmix::data::csvio::{load_csv_table, write_weights_to};
use tvmix::data::{load_csv, load_model, save_model, simulate_scenario, unit_grid, write_csv, GroundTruth, PanelDataset};
use tvmix::eval::metrics::GRID_POINTS;
use tvmix::eval::{
    bootstrap_bands, centered_trajectories, density_error, kde_time_conditional, rate_experiment, support_grid,
    Integration, RateConfig, Regime,
};
use tvmix::ode::{fit_model, fit_models, FittedModel, ModelFit};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::output::{header, num, OutDir};

fn to_value<S: serde::Serialize>(v: &S) -> CliResult<Value> {
    Ok(serde_json::to_value(v)?)
}

fn read_model(path: &std::path::Path) -> CliResult<FittedModel<f64>> {
    load_model(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_panel(path: &std::path::Path) -> CliResult<Vec<PanelDataset<f64>>> {
    load_csv(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn subject_name(ds: &PanelDataset<f64>, i: usize) -> String {
    ds.subject().map_or_else(|| format!("s{i}"), str::to_owned)
}

fn check_unit_times(times: &[f64]) -> CliResult<()> {
    match times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        Some(t) => Err(CliError::Usage(format!("t = {t} lies outside [0, 1]; the model does not extrapolate"))),
        None => Ok(()),
    }
}

fn component_rows(model_idx: usize, model: &FittedModel<f64>) -> Vec<Vec<String>> {
    let c = model.components();
    (0..c.k())
        .map(|s| {
            let mut row = vec![model_idx.to_string(), (s + 1).to_string()];
            row.extend(c.mean(s).iter().copied().map(num));
            row.extend(c.covariance(s).into_iter().map(num));
            row
        })
        .collect()
}

fn component_header(dim: usize) -> Vec<String> {
    let mut h = header(&["model", "component"], "m", dim);
    for i in 1..=dim {
        for j in 1..=dim {
            h.push(format!("c{i}_{j}"));
        }
    }
    h
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    if a.replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    let mut out = OutDir::create(&a.out, &[])?;
    let times = unit_grid::<f64>(a.grid);
    let mut truth = None;
    let mut files = Vec::with_capacity(a.replicates);
    for r in 0..a.replicates {
        let seed = a.seed.wrapping_add(r as u64);
        let (data, gt) = simulate_scenario::<f64>(a.d, a.n_t, a.grid, seed)?;
        let name = format!("replicate_{r:03}.csv");
        write_csv(&[data.with_subject(format!("rep{r}"))], out.path(&name)?)?;
        files.push(json!({ "file": name, "seed": seed }));
        truth.get_or_insert(gt);
    }
    let truth = truth.expect("at least one replicate");
    let per_time = times
        .iter()
        .map(|&t| {
            let (c, w) = truth.mixture_at(t)?;
            Ok(json!({
                "t": t,
                "weights": w,
                "means": (0..c.k()).map(|s| c.mean(s).to_vec()).collect::<Vec<_>>(),
                "covariances": (0..c.k()).map(|s| c.covariance(s)).collect::<Vec<_>>(),
            }))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let config = json!({
        "args": to_value(a)?,
        "replicates": files,
        "truth": { "scenario": "moving_means", "dim": a.d, "times": per_time },
    });
    out.finish("simulate", config, &[])
}

pub fn fit(a: &FitArgs) -> CliResult<()> {
    let fit_cfg = a.stage_one.resolve(a.seed)?;
    let ode_cfg = a.ode.resolve(a.seed)?;
    let datasets = load_csv_table::<f64>(&a.data)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.data.display())))?
        .datasets;
    let mut out = OutDir::create(&a.out, &[&a.data])?;

    let groups: Vec<(Vec<usize>, ModelFit<f64>)> = if a.share_components || datasets.len() == 1 {
        vec![((0..datasets.len()).collect(), fit_models(&datasets, a.k, &fit_cfg, &ode_cfg)?)]
    } else {
        datasets
            .iter()
            .enumerate()
            .map(|(i, ds)| Ok((vec![i], fit_model(ds, a.k, &fit_cfg, &ode_cfg)?)))
            .collect::<CliResult<_>>()?
    };

    let single = datasets.len() == 1;
    let mut subjects = Vec::new();
    let mut group_reports = Vec::new();
    for (members, fit) in &groups {
        for (local, &i) in members.iter().enumerate() {
            let suffix = if single { String::new() } else { format!("_{i}") };
            let model_name = format!("model{suffix}.json");
            save_model(&fit.models[local], out.path(&model_name)?)?;
            let weights_name = format!("stage_one_weights{suffix}.csv");
            let w = &fit.stage_one.weights[local];
            let file = std::fs::File::create(out.path(&weights_name)?)?;
            write_weights_to(w.times(), w.rows(), std::io::BufWriter::new(file))?;
            let tr = &fit.training[local];
            subjects.push(json!({
                "index": i,
                "subject": subject_name(&datasets[i], i),
                "model": model_name,
                "stage_one_weights": weights_name,
                "node_initial_loss": tr.initial_loss,
                "node_loss": tr.loss,
                "node_restarts": tr.restarts,
                "node_lr": tr.lr,
            }));
        }
        let c = &fit.stage_one.components;
        group_reports.push(json!({
            "subjects": members,
            "means": (0..c.k()).map(|s| c.mean(s).to_vec()).collect::<Vec<_>>(),
            "covariances": (0..c.k()).map(|s| c.covariance(s)).collect::<Vec<_>>(),
            "objective_trace": fit.stage_one.trace,
            "qp_warnings": fit.stage_one.qp_warnings,
            "stage_one_seconds": fit.stage_one_seconds,
            "training_seconds": fit.training_seconds,
        }));
    }
    out.write_json("fit_report.json", &json!({ "subjects": subjects, "component_groups": group_reports }))?;
    let config = json!({ "args": to_value(a)?, "fit": to_value(&fit_cfg)?, "ode": to_value(&ode_cfg)? });
    out.finish("fit", config, &[&a.data])
}

pub fn predict(a: &PredictArgs) -> CliResult<()> {
    let times = match (&a.t_grid, &a.times) {
        (Some(n), _) if *n < 2 => return Err(CliError::Usage("--t-grid needs at least two points".into())),
        (Some(n), _) => unit_grid::<f64>(*n),
        (None, Some(ts)) => ts.clone(),
        (None, None) => unit_grid::<f64>(101),
    };
    check_unit_times(&times)?;
    let model = read_model(&a.model)?;
    if a.density_points.is_some() && model.dim() != 1 {
        return Err(CliError::Usage("density grids are written for d = 1 models only".into()));
    }
    let mut out = OutDir::create(&a.out, &[&a.model])?;
    let rows = model.predict_trajectory(&times)?;
    let file = std::fs::File::create(out.path("weights.csv")?)?;
    write_weights_to(&times, &rows, std::io::BufWriter::new(file))?;
    if let Some(points) = a.density_points {
        let grid = support_grid(model.components(), points)?;
        let xs: Vec<Vec<f64>> = grid.iter().map(|&x| vec![x]).collect();
        let mut table = Vec::with_capacity(times.len() * xs.len());
        for &t in &times {
            let f = model.density_grid(&xs, t)?;
            table.extend(grid.iter().zip(f).map(|(&x, f)| vec![num(t), num(x), num(f)]));
        }
        out.write_table("density.csv", &header(&["t", "x", "f"], "", 0), table)?;
    }
    let config = json!({ "args": to_value(a)?, "times": times });
    out.finish("predict", config, &[&a.model])
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    match &a.target {
        EvaluateTarget::Density(d) => evaluate_density(d),
        EvaluateTarget::Rate(r) => evaluate_rate(r),
    }
}

fn evaluate_density(a: &DensityArgs) -> CliResult<()> {
    let model = read_model(&a.model)?;
    let datasets = read_panel(&a.data)?;
    let ds = &datasets[0];
    if ds.dim() != model.dim() {
        return Err(CliError::Usage(format!("data has d = {}, model has d = {}", ds.dim(), model.dim())));
    }
    let mut out = OutDir::create(&a.out, &[&a.model, &a.data])?;
    let truth = GroundTruth::MovingMeans { dim: ds.dim() };
    let times = ds.times().to_vec();
    let method = if ds.dim() == 1 {
        Integration::Grid { points: GRID_POINTS }
    } else {
        Integration::ImportanceSampling { nodes: a.nodes, seed: a.seed }
    };
    let fitted = density_error(|i, xs| model.density_grid(xs, times[i]), &truth, &times, method)?;
    let kde = density_error(|i, xs| kde_time_conditional(ds, times[i], xs), &truth, &times, method)?;
    let rows = (0..times.len()).map(|i| {
        vec![num(times[i]), num(fitted.l2[i]), num(fitted.l1[i]), num(kde.l2[i]), num(kde.l1[i])]
    });
    out.write_table("density_error.csv", &header(&["t", "l2_model", "l1_model", "l2_kde", "l1_kde"], "", 0), rows)?;
    out.write_json(
        "evaluation.json",
        &json!({
            "model": fitted,
            "kde": kde,
            "mean_l2_model": fitted.mean_l2(),
            "mean_l2_kde": kde.mean_l2(),
        }),
    )?;
    let config = json!({ "args": to_value(a)?, "integration": format!("{method:?}") });
    out.finish("evaluate density", config, &[&a.model, &a.data])
}

fn evaluate_rate(a: &RateArgs) -> CliResult<()> {
    let cfg = RateConfig {
        sizes: a.sizes.clone(),
        replicates: a.replicates,
        m_points: a.grid,
        seed: a.seed,
        fit: a.stage_one.resolve(a.seed)?,
    };
    let regimes = match a.regime {
        RegimeArg::Regular => vec![Regime::Regular],
        RegimeArg::Singular => vec![Regime::Singular],
        RegimeArg::Both => vec![Regime::Regular, Regime::Singular],
    };
    let mut out = OutDir::create(&a.out, &[])?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for regime in regimes {
        let report = rate_experiment(regime, &cfg)?;
        let name = format!("{regime:?}").to_lowercase();
        for (j, n) in report.sizes.iter().enumerate() {
            for (r, v) in report.sup_mmd[j].iter().enumerate() {
                rows.push(vec![name.clone(), n.to_string(), r.to_string(), num(*v)]);
            }
        }
        reports.push(json!({ "report": report, "medians": report.medians() }));
    }
    out.write_table("rate.csv", &header(&["regime", "n", "replicate", "sup_mmd"], "", 0), rows)?;
    out.write_json("rate.json", &reports)?;
    let config = json!({ "args": to_value(a)?, "fit": to_value(&cfg.fit)? });
    out.finish("evaluate rate", config, &[])
}

pub fn bootstrap(a: &BootstrapArgs) -> CliResult<()> {
    let model = read_model(&a.model)?;
    let datasets = read_panel(&a.data)?;
    let ds = match &a.subject {
        None => &datasets[0],
        Some(name) => datasets
            .iter()
            .enumerate()
            .find(|(i, d)| subject_name(d, *i) == *name)
            .map(|(_, d)| d)
            .ok_or_else(|| CliError::Usage(format!("subject `{name}` not found in {}", a.data.display())))?,
    };
    if model.dim() != 1 {
        return Err(CliError::Usage("bootstrap bands are computed on an x grid for d = 1 models only".into()));
    }
    check_unit_times(&a.times)?;
    let fit_cfg = a.stage_one.resolve(a.seed)?;
    let mut out = OutDir::create(&a.out, &[&a.model, &a.data])?;
    let grid: Vec<Vec<f64>> = support_grid(model.components(), a.grid_points)?.into_iter().map(|x| vec![x]).collect();
    let bands = bootstrap_bands(ds, &model, &a.times, &grid, a.b, a.level, a.seed, &fit_cfg)?;
    let mut files = Vec::with_capacity(a.times.len());
    for (j, &t) in a.times.iter().enumerate() {
        let name = format!("bands_{j:02}.csv");
        let rows = grid
            .iter()
            .enumerate()
            .map(|(g, x)| vec![num(x[0]), num(bands.point[j][g]), num(bands.lower[j][g]), num(bands.upper[j][g])]);
        out.write_table(&name, &header(&["x", "point", "lower", "upper"], "", 0), rows)?;
        files.push(json!({ "t": t, "file": name }));
    }
    out.write_json(
        "bootstrap.json",
        &json!({
            "bands": files,
            "replicates": bands.replicates,
            "level": bands.level,
            "median_width": bands.median_width(),
            "qp_warnings": bands.qp_warnings,
        }),
    )?;
    let config = json!({ "args": to_value(a)?, "fit": to_value(&fit_cfg)? });
    out.finish("bootstrap", config, &[&a.model, &a.data])
}

pub fn export(a: &ExportArgs) -> CliResult<()> {
    if a.t_grid < 2 {
        return Err(CliError::Usage("--t-grid needs at least two points".into()));
    }
    let models = a.model.iter().map(|p| read_model(p)).collect::<CliResult<Vec<_>>>()?;
    let (k, dim) = (models[0].k(), models[0].dim());
    if models.iter().any(|m| m.k() != k || m.dim() != dim) {
        return Err(CliError::Usage("all exported models must share K and d".into()));
    }
    let inputs: Vec<&std::path::Path> = a.model.iter().map(|p| p.as_path()).collect();
    let mut out = OutDir::create(&a.out, &inputs)?;
    let times = unit_grid::<f64>(a.t_grid);

    let comps = models.iter().enumerate().flat_map(|(i, m)| component_rows(i, m));
    out.write_table("components.csv", &component_header(dim), comps)?;

    let mut traj = Vec::with_capacity(models.len() * times.len());
    for (i, m) in models.iter().enumerate() {
        for (&t, w) in times.iter().zip(m.predict_trajectory(&times)?) {
            let mut row = vec![i.to_string(), num(t)];
            row.extend(w.into_iter().map(num));
            traj.push(row);
        }
    }
    out.write_table("trajectories.csv", &header(&["model", "t"], "alpha", k), traj)?;

    if models.len() > 1 {
        let c = centered_trajectories(&models, &times, &a.levels)?;
        let mut rows = Vec::new();
        for (l, level) in c.levels.iter().enumerate() {
            for (g, &t) in c.t_grid.iter().enumerate() {
                let mut row = vec![num(*level), num(t)];
                row.extend(c.quantiles[l][g].iter().copied().map(num));
                rows.push(row);
            }
        }
        out.write_table("centered_quantiles.csv", &header(&["level", "t"], "z", k), rows)?;
    }
    out.finish("export", json!({ "args": to_value(a)? }), &inputs)
}
