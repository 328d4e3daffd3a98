use anyhow::{bail, Context, Result};
use log::{info, warn};
use msntf::clustering::{elbow_curve, elbow_point, kmeans, kmedoids, silhouette, Method, PointSet};
use msntf::corcondia::cc_scan;
use msntf::demographics::{parse_demographics, Attribute};
use msntf::groups::{jaccard_overlap, representative_groups};
use msntf::ingest::{build_tensor, parse_receipts, CalendarConfig, DAYS_PER_WEEK};
use msntf::parafac::{fit_multi, normalize};
use msntf::persist::{component_names, write_matrix_csv};
use msntf::stats::{chi_squared, contingency, pairwise_tests, STAR_LEVELS};
use msntf::synth::{generate_synthetic, SyntheticSpec};
use msntf::{relative_error, FactorModel, Matrix};
use serde_json::json;

use crate::artifacts::{self as art, f, open, Manifest, TensorMeta, Workspace};
use crate::config::PipelineConfig;

const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

/// Synthetic spec used when neither receipts nor a spec are configured.
pub const DEFAULT_SYNTH_USERS: usize = 200;
pub const DEFAULT_SYNTH_WEEKS: usize = 42;

fn log_row_errors(what: &str, errors: &[msntf::ingest::RowError]) {
    for e in errors {
        warn!("{what} line {}: {}", e.line, e.message);
    }
}

pub fn ingest(cfg: &PipelineConfig, ws: &Workspace) -> Result<Manifest> {
    let Some(path) = &cfg.input.receipts else {
        bail!("input.receipts is not set");
    };
    let mut m = Manifest::new("ingest", cfg);
    let (records, report) = parse_receipts(open(path)?).with_context(|| format!("parsing {}", path.display()))?;
    log_row_errors(&path.display().to_string(), &report.errors);
    m.external_input(path)?;
    let cal = match &cfg.calendar {
        Some(c) => c.clone(),
        None => {
            let (Some(lo), Some(hi)) = (records.iter().map(|r| r.date).min(), records.iter().map(|r| r.date).max()) else {
                bail!("{} holds no valid records", path.display());
            };
            info!("calendar window derived from data: {lo} to {hi}");
            CalendarConfig::new(lo, hi)
        }
    };
    let build = build_tensor(&records, &cal)?;
    let meta = TensorMeta {
        shape: build.tensor.shape(),
        users: build.users.clone(),
        days: (0..DAYS_PER_WEEK)
            .map(|j| WEEKDAYS[(cal.week_start.num_days_from_monday() as usize + j) % 7].to_string())
            .collect(),
        weeks: build.week_starts.iter().map(|d| d.to_string()).collect(),
        source: path.display().to_string(),
    };
    ws.write_tensor(&build.tensor, &meta)?;
    m.outputs.extend([art::TENSOR.to_string(), art::TENSOR_META.to_string()]);

    let mut demo_rows = None;
    if let Some(dp) = &cfg.input.demographics {
        let (table, drep) = parse_demographics(open(dp)?).with_context(|| format!("parsing {}", dp.display()))?;
        log_row_errors(&dp.display().to_string(), &drep.errors);
        m.external_input(dp)?;
        let mut w = ws.writer(art::DEMOGRAPHICS)?;
        table.write_csv(&mut w)?;
        std::io::Write::flush(&mut w)?;
        m.outputs.push(art::DEMOGRAPHICS.to_string());
        demo_rows = Some(json!({ "accepted": drep.accepted, "rejected": drep.errors.len() }));
    } else if ws.exists(art::DEMOGRAPHICS) {
        std::fs::remove_file(ws.path(art::DEMOGRAPHICS))?;
    }

    let (i, j, k) = build.tensor.shape();
    m.summary = json!({
        "rows_read": report.rows_read,
        "accepted": report.accepted,
        "rejected": report.errors.len(),
        "included": build.included,
        "out_of_window": build.out_of_window,
        "outside_weeks": build.outside_weeks,
        "users": i,
        "weeks": k,
        "total_mass": build.tensor.sum(),
        "demographics": demo_rows,
    });
    m.warnings = report.errors.iter().map(|e| format!("line {}: {}", e.line, e.message)).collect();
    m.save(ws)?;
    println!(
        "ingested {} of {} rows into a {i}x{j}x{k} tensor ({} out of window, {} in partial weeks, {} rejected)",
        build.included,
        report.rows_read,
        build.out_of_window,
        build.outside_weeks,
        report.errors.len()
    );
    Ok(m)
}

pub fn synth(cfg: &PipelineConfig, ws: &Workspace) -> Result<Manifest> {
    let spec = cfg
        .input
        .synthetic
        .clone()
        .unwrap_or_else(|| SyntheticSpec::three_patterns(DEFAULT_SYNTH_USERS, DEFAULT_SYNTH_WEEKS, cfg.seed));
    let data = generate_synthetic(&spec)?;
    let mut m = Manifest::new("synth", cfg);
    let meta = TensorMeta {
        shape: data.tensor.shape(),
        users: data.user_ids.clone(),
        days: WEEKDAYS.iter().map(|s| s.to_string()).collect(),
        weeks: (1..=spec.n_weeks).map(|k| format!("w{k}")).collect(),
        source: "synthetic".into(),
    };
    ws.write_tensor(&data.tensor, &meta)?;
    let mut w = ws.writer(art::DEMOGRAPHICS)?;
    data.demographics.write_csv(&mut w)?;
    std::io::Write::flush(&mut w)?;
    let names = component_names(spec.rank());
    write_factor(ws, art::TRUTH_A, &data.truth.a, "user_id", &meta.users, &names)?;
    write_factor(ws, art::TRUTH_B, &data.truth.b, "day", &meta.days, &names)?;
    write_factor(ws, art::TRUTH_C, &data.truth.c, "week", &meta.weeks, &names)?;
    ws.write_table(
        art::TRUTH_GROUPS,
        &["user_id", "group"],
        meta.users.iter().zip(&data.labels).map(|(u, g)| vec![u.clone(), (g + 1).to_string()]),
    )?;
    m.outputs = [art::TENSOR, art::TENSOR_META, art::DEMOGRAPHICS, art::TRUTH_A, art::TRUTH_B, art::TRUTH_C, art::TRUTH_GROUPS]
        .map(String::from)
        .to_vec();
    let (i, j, k) = data.tensor.shape();
    m.summary = json!({ "users": i, "weeks": k, "rank": spec.rank(), "total_mass": data.tensor.sum(), "spec": spec });
    m.save(ws)?;
    println!("synthesized a {i}x{j}x{k} tensor with {} planted components", spec.rank());
    Ok(m)
}

fn write_factor(ws: &Workspace, name: &str, m: &Matrix, label: &str, labels: &[String], cols: &[String]) -> Result<()> {
    let mut w = ws.writer(name)?;
    write_matrix_csv(m, label, labels, cols, &mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

pub fn cc_scan_cmd(cfg: &PipelineConfig, ws: &Workspace) -> Result<(Manifest, Option<usize>)> {
    let (t, _) = ws.read_tensor()?;
    let mut m = Manifest::new("cc-scan", cfg);
    m.input(ws, art::TENSOR)?;
    let report = cc_scan(&t, &cfg.scan.ranks, cfg.n_runs, &cfg.fit_config(cfg.fit.rank), cfg.scan.threshold)?;
    ws.write_table(
        art::CC_RUNS,
        &["rank", "run", "seed", "cc"],
        report.ranks.iter().flat_map(|r| {
            r.values.iter().enumerate().map(move |(run, v)| {
                vec![r.rank.to_string(), run.to_string(), (report.base_seed + run as u64).to_string(), opt(*v)]
            })
        }),
    )?;
    ws.write_table(
        art::CC_SUMMARY,
        &["rank", "mean", "ci_low", "ci_high", "n_valid", "selected"],
        report.ranks.iter().map(|r| {
            let ci = r.ci();
            vec![
                r.rank.to_string(),
                opt(r.mean),
                opt(ci.map(|c| c.0)),
                opt(ci.map(|c| c.1)),
                r.valid_values().len().to_string(),
                r.selected.to_string(),
            ]
        }),
    )?;
    m.outputs = vec![art::CC_RUNS.into(), art::CC_SUMMARY.into()];
    m.warnings = report.warnings.clone();
    m.summary = json!({ "selected_rank": report.selected_rank, "threshold": report.threshold, "n_runs": report.n_runs });
    m.save(ws)?;
    for r in &report.ranks {
        println!(
            "R={} mean CC {}{}",
            r.rank,
            r.mean.map_or("n/a".into(), |v| format!("{v:.2}")),
            r.ci_half_width.map_or(String::new(), |h| format!(" ± {h:.2}"))
        );
    }
    match report.selected_rank {
        Some(r) => println!("selected rank {r}"),
        None => println!("no rank reached CC {}", report.threshold),
    }
    Ok((m, report.selected_rank))
}

/// Components ordered by decreasing weight, weights folded into A.
fn presentation(model: &FactorModel) -> Result<(FactorModel, Vec<f64>)> {
    let n = normalize(model);
    let w = n.effective_weights();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&x, &y| w[y].total_cmp(&w[x]).then(x.cmp(&y)));
    let p = n.permuted(&order)?;
    let weights = p.effective_weights();
    Ok((p.absorb_weights(), weights))
}

pub fn fit(cfg: &PipelineConfig, ws: &Workspace, rank: usize) -> Result<Manifest> {
    let (t, meta) = ws.read_tensor()?;
    let mut m = Manifest::new("fit", cfg);
    m.input(ws, art::TENSOR)?;
    let fc = cfg.fit_config(rank);
    let multi = fit_multi(&t, &fc, cfg.n_runs)?;
    let (model, weights) = presentation(&multi.best.model)?;
    let err = relative_error(&t, &model)?;
    let names = component_names(rank);
    write_factor(ws, art::FACTOR_A, &model.a, "user_id", &meta.users, &names)?;
    write_factor(ws, art::FACTOR_B, &model.b, "day", &meta.days, &names)?;
    write_factor(ws, art::FACTOR_C, &model.c, "week", &meta.weeks, &names)?;
    ws.write_table(
        art::WEIGHTS,
        &["component", "weight"],
        names.iter().zip(&weights).map(|(n, w)| vec![n.clone(), f(*w)]),
    )?;
    ws.write_table(
        art::FIT_RUNS,
        &["seed", "objective"],
        multi.objectives.iter().map(|(s, o)| vec![s.to_string(), f(*o)]),
    )?;
    m.outputs = [art::FACTOR_A, art::FACTOR_B, art::FACTOR_C, art::WEIGHTS, art::FIT_RUNS].map(String::from).to_vec();
    m.warnings = multi.best.warnings.clone();
    m.summary = json!({
        "rank": rank,
        "n_runs": cfg.n_runs,
        "best_seed": multi.best.seed,
        "objective": multi.best.objective(),
        "relative_error": err,
        "iterations": multi.best.iterations,
        "converged": multi.best.converged,
    });
    m.save(ws)?;
    println!(
        "rank {rank}: best of {} runs is seed {} with relative error {err:.6} after {} sweeps",
        cfg.n_runs, multi.best.seed, multi.best.iterations
    );
    Ok(m)
}

pub fn cluster(cfg: &PipelineConfig, ws: &Workspace) -> Result<Manifest> {
    let (users, a) = ws.read_matrix(art::FACTOR_A)?;
    let mut m = Manifest::new("cluster", cfg);
    m.input(ws, art::FACTOR_A)?;
    let points = PointSet::from_membership(&a)?;
    if !points.zero_rows().is_empty() {
        m.warnings.push(format!("{} users with all-zero memberships given uniform shares", points.zero_rows().len()));
    }
    let k = cfg.cluster.k;
    let res = match cfg.cluster.method {
        Method::KMedoids => kmedoids(&points, k, cfg.seed)?,
        Method::KMeans => kmeans(&points, k, cfg.seed)?,
    };
    ws.write_table(
        art::CLUSTERS,
        &["user_id", "cluster"],
        users.iter().zip(&res.labels).map(|(u, l)| vec![u.clone(), (l + 1).to_string()]),
    )?;
    m.outputs.push(art::CLUSTERS.into());

    let sil = if k >= 2 {
        let s = silhouette(&points, &res.labels)?;
        ws.write_table(
            art::SILHOUETTE,
            &["user_id", "cluster", "silhouette"],
            users
                .iter()
                .zip(&res.labels)
                .zip(&s.coefficients)
                .map(|((u, l), c)| vec![u.clone(), (l + 1).to_string(), f(*c)]),
        )?;
        m.outputs.push(art::SILHOUETTE.into());
        Some(s.mean)
    } else {
        m.warnings.push("silhouette needs k >= 2; skipped".into());
        None
    };

    let ks: Vec<usize> = cfg.cluster.k_range.iter().copied().filter(|&x| x <= points.len()).collect();
    let curve = elbow_curve(&points, &ks, cfg.seed)?;
    ws.write_table(art::ELBOW, &["k", "cost"], curve.iter().map(|(k, c)| vec![k.to_string(), f(*c)]))?;
    m.outputs.push(art::ELBOW.into());

    m.summary = json!({
        "method": res.method,
        "k": k,
        "total_cost": res.total_cost,
        "sizes": res.cluster_sizes(),
        "iterations": res.iterations,
        "mean_silhouette": sil,
        "elbow_k": elbow_point(&curve),
    });
    m.save(ws)?;
    println!(
        "{} with k={k}: cost {:.6}, sizes {:?}{}",
        res.method,
        res.total_cost,
        res.cluster_sizes(),
        sil.map_or(String::new(), |s| format!(", mean silhouette {s:.4}"))
    );
    Ok(m)
}

fn read_clusters(ws: &Workspace) -> Result<(Vec<String>, Vec<usize>)> {
    let mut rd = csv::Reader::from_reader(ws.reader(art::CLUSTERS)?);
    let (mut ids, mut labels) = (Vec::new(), Vec::new());
    for (n, rec) in rd.records().enumerate() {
        let rec = rec?;
        let c: usize = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .filter(|&c| c >= 1)
            .with_context(|| format!("{} line {}: bad cluster id", art::CLUSTERS, n + 2))?;
        ids.push(rec[0].to_string());
        labels.push(c - 1);
    }
    Ok((ids, labels))
}

pub fn stats(cfg: &PipelineConfig, ws: &Workspace) -> Result<Manifest> {
    let mut m = Manifest::new("stats", cfg);
    let (users, a) = ws.read_matrix(art::FACTOR_A)?;
    m.input(ws, art::FACTOR_A)?;
    let groups = representative_groups(&a, cfg.stats.fraction)?;
    let names = component_names(a.cols());
    ws.write_table(
        art::GROUPS,
        &["component", "user_id"],
        groups
            .members
            .iter()
            .enumerate()
            .flat_map(|(r, g)| g.iter().map(|&i| vec![names[r].clone(), users[i].clone()]).collect::<Vec<_>>()),
    )?;
    ws.write_table(
        art::GROUP_THRESHOLDS,
        &["component", "threshold", "size"],
        (0..a.cols()).map(|r| vec![names[r].clone(), f(groups.thresholds[r]), groups.members[r].len().to_string()]),
    )?;
    write_factor(ws, art::JACCARD, &jaccard_overlap(&groups), "component", &names, &names)?;
    m.outputs = [art::GROUPS, art::GROUP_THRESHOLDS, art::JACCARD].map(String::from).to_vec();

    if !ws.exists(art::DEMOGRAPHICS) {
        let notice = "no demographics available; chi-squared tests skipped".to_string();
        warn!("{notice}");
        println!("{notice}");
        m.warnings.push(notice);
        m.summary = json!({ "skipped_tests": true, "group_sizes": groups.sizes() });
        m.save(ws)?;
        return Ok(m);
    }
    let (demo, drep) = parse_demographics(ws.reader(art::DEMOGRAPHICS)?)?;
    log_row_errors(art::DEMOGRAPHICS, &drep.errors);
    m.input(ws, art::DEMOGRAPHICS)?;
    let (ids, labels) = read_clusters(ws)?;
    m.input(ws, art::CLUSTERS)?;

    let mut null_rows = Vec::new();
    let mut share_rows = Vec::new();
    let mut pair_rows = Vec::new();
    let mut excluded = 0;
    for attr in Attribute::ALL {
        let table = contingency(&ids, &labels, &demo, attr)?;
        excluded = table.excluded_users;
        let r = chi_squared(&table)?;
        null_rows.push(vec![attr.label().into(), f(r.statistic), r.dof.to_string(), f(r.p_value), r.star_string()]);
        let shares = table.column_shares();
        let total: f64 = table.observed.as_slice().iter().sum();
        for (ci, cat) in table.categories.iter().enumerate() {
            let pop = table.observed.row(ci).iter().sum::<f64>() / total;
            for (j, cl) in table.clusters.iter().enumerate() {
                share_rows.push(vec![
                    attr.label().into(),
                    cat.clone(),
                    (cl + 1).to_string(),
                    f(table.observed[(ci, j)]),
                    f(shares[(ci, j)]),
                    f(pop),
                ]);
            }
        }
        if labels.iter().any(|&l| l > 0) {
            for t in pairwise_tests(&ids, &labels, &demo, attr, &STAR_LEVELS, cfg.stats.bonferroni)? {
                pair_rows.push(vec![
                    attr.label().into(),
                    (t.x + 1).to_string(),
                    (t.y + 1).to_string(),
                    f(t.result.statistic),
                    t.result.star_string(),
                ]);
            }
        }
    }
    ws.write_table(art::CHI2_NULL, &["attribute", "chi2", "dof", "p_value", "significance"], null_rows)?;
    ws.write_table(
        art::CLUSTER_DEMOGRAPHICS,
        &["attribute", "category", "cluster", "count", "share", "population_share"],
        share_rows,
    )?;
    let n_pairs = pair_rows.len();
    ws.write_table(art::CHI2_PAIRWISE, &["attribute", "cluster_x", "cluster_y", "chi2", "significance"], pair_rows)?;
    m.outputs.extend([art::CHI2_NULL, art::CLUSTER_DEMOGRAPHICS, art::CHI2_PAIRWISE].map(String::from));
    if excluded > 0 {
        m.warnings.push(format!("{excluded} clustered users lack demographics and were excluded"));
    }
    m.summary = json!({
        "skipped_tests": false,
        "excluded_users": excluded,
        "pairwise_tests": n_pairs,
        "bonferroni": cfg.stats.bonferroni,
        "group_sizes": groups.sizes(),
    });
    m.save(ws)?;
    println!("{n_pairs} pairwise tests over {} attributes; group sizes {:?}", Attribute::ALL.len(), groups.sizes());
    Ok(m)
}

/// Bundle file name and the artifact it is copied from.
pub const REPORT_FILES: [(&str, &str); 8] = [
    ("core_consistency.csv", art::CC_SUMMARY),
    ("memberships.csv", art::FACTOR_A),
    ("day_patterns.csv", art::FACTOR_B),
    ("week_patterns.csv", art::FACTOR_C),
    ("elbow.csv", art::ELBOW),
    ("cluster_demographics.csv", art::CLUSTER_DEMOGRAPHICS),
    ("pairwise_tests.csv", art::CHI2_PAIRWISE),
    ("group_overlap.csv", art::JACCARD),
];

const STAGE_MANIFESTS: [&str; 6] = ["ingest.json", "synth.json", "cc-scan.json", "fit.json", "cluster.json", "stats.json"];

pub fn report(cfg: &PipelineConfig, ws: &Workspace) -> Result<Manifest> {
    let out = Workspace::create(ws.path(art::REPORT_DIR))?;
    for entry in std::fs::read_dir(&out.dir)? {
        let p = entry?.path();
        if p.is_file() {
            std::fs::remove_file(p)?;
        }
    }
    let mut m = Manifest::new("report", cfg);
    for name in STAGE_MANIFESTS {
        if ws.exists(name) {
            m.input(ws, name)?;
        }
    }
    for (dst, src) in REPORT_FILES {
        if !ws.exists(src) {
            m.warnings.push(format!("{src} missing; {dst} not bundled"));
            continue;
        }
        m.input(ws, src)?;
        std::fs::copy(ws.path(src), out.path(dst)).with_context(|| format!("copying {src}"))?;
        m.outputs.push(dst.to_string());
    }
    for w in &m.warnings {
        warn!("{w}");
    }
    m.summary = json!({ "files": m.outputs.len() });
    out.write_json("manifest.json", &m)?;
    println!("report bundle with {} tables in {}", m.outputs.len(), out.dir.display());
    Ok(m)
}

pub fn run(cfg: &PipelineConfig, ws: &Workspace) -> Result<()> {
    if cfg.input.receipts.is_some() {
        ingest(cfg, ws)?;
    } else {
        synth(cfg, ws)?;
    }
    let (_, selected) = cc_scan_cmd(cfg, ws)?;
    let rank = match selected {
        Some(r) if cfg.scan.use_selected => r,
        _ => cfg.fit.rank,
    };
    fit(cfg, ws, rank)?;
    cluster(cfg, ws)?;
    stats(cfg, ws)?;
    report(cfg, ws)?;
    Ok(())
}
