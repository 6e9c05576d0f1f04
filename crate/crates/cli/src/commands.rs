use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use gem_core::domains::gridworld::{generate_grid_dataset, GridConfig};
use gem_core::domains::kitchen::{simulate_participant, Kitchen, SimulationConfig};
use gem_core::inference::{
    aggregate_feature_marginal, fixed_noise_posterior, gibbs_posterior, implicit_posterior,
    kl_to_truth, posterior_exact, Evidence, GibbsConfig, JointPosterior, Selection,
    DEFAULT_ENUMERATION_CAP,
};
use gem_core::io::{
    dataset_checksum, read_log, AnyDomain, DemonstrationLog, LogHeader, LogWriter,
    PosteriorDocument, RecordInfo,
};
use gem_core::{BlindSpotMask, Dataset, Domain, GemError, NoiseLevel, Priors, State};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::cli::{DomainName, EvalArgs, GenerateArgs, GibbsArgs, InferArgs, MethodName, QueryArgs};
use crate::config;
use crate::curve::{CurveRow, CurveTable};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(GemError::from)?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn to_value(value: &impl serde::Serialize) -> Value {
    serde_json::to_value(value).expect("config types serialize")
}

pub fn open_log(path: &Path) -> CliResult<DemonstrationLog> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(read_log(BufReader::new(file))?)
}

/// The whole log, or the records of one participant.
pub fn select_participant(log: &DemonstrationLog, participant: Option<&str>) -> CliResult<Dataset> {
    let Some(wanted) = participant else {
        return Ok(log.dataset.clone());
    };
    let groups = log.participants();
    groups
        .iter()
        .find(|(k, _)| k == wanted)
        .map(|(_, d)| d.clone())
        .ok_or_else(|| {
            let known: Vec<&str> = groups.iter().map(|(k, _)| k.as_str()).collect();
            CliError::Usage(format!("no participant `{wanted}` in the log (found {known:?})"))
        })
}

pub fn generate(args: &GenerateArgs) -> CliResult<()> {
    let start = Instant::now();
    let (domain, datasets, seed, snapshot) = match args.domain {
        DomainName::Gridworld => {
            let mut cfg = config::grid_config(args.config.as_deref())?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let n = args.n.unwrap_or(100);
            let (world, data) = generate_grid_dataset(&cfg, n)?;
            let snapshot = json!({"domain": "gridworld", "n": n, "grid": to_value(&cfg)});
            (AnyDomain::from(world), vec![data], cfg.seed, snapshot)
        }
        DomainName::Kitchen => {
            let mut run = config::kitchen_run(args.config.as_deref())?;
            if let Some(seed) = args.seed {
                run.simulation.seed = seed;
            }
            if let Some(n) = args.n {
                run.simulation.per_participant = n;
            }
            if let Some(p) = args.participants {
                run.simulation.participants = p;
            }
            let kitchen = Kitchen::new(run.kitchen.clone())?;
            let data = gem_core::domains::kitchen::simulate_participants(&kitchen, &run.simulation)?;
            let snapshot = json!({"domain": "kitchen", "run": to_value(&run)});
            (AnyDomain::from(kitchen), data, run.simulation.seed, snapshot)
        }
    };

    let header = LogHeader::new(&domain, datasets[0].source());
    let mut writer = LogWriter::new(create(&args.out)?, &domain, &header)?;
    // kitchen records carry their participant so logs can be split again
    let tag = args.domain == DomainName::Kitchen;
    for (p, data) in datasets.iter().enumerate() {
        let info = RecordInfo {
            timestamp: None,
            meta: tag.then(|| json!({"participant": p})),
        };
        for d in data.demonstrations() {
            writer.write(d, &info)?;
        }
    }
    writer.finish()?.flush().map_err(|e| CliError::io(&args.out, e))?;
    RunManifest::new("generate", Some(seed), snapshot).finish(&args.out, start.elapsed())?;
    Ok(())
}

fn gibbs_config(args: &GibbsArgs, seed: Option<u64>) -> GibbsConfig {
    GibbsConfig {
        iterations: args.iterations,
        burn_in: args.burn_in,
        thin: args.thin,
        chains: args.chains,
        seed,
        ..GibbsConfig::default()
    }
}

pub fn infer(args: &InferArgs) -> CliResult<()> {
    let start = Instant::now();
    let log = open_log(&args.data)?;
    let data = select_participant(&log, args.participant.as_deref())?;
    let priors = config::priors(args.priors.as_deref(), &log.domain)?;
    if args.eta_fixed.is_some() && args.method != MethodName::FixedEta {
        return Err(CliError::Usage("--eta-fixed requires --method fixed-eta".into()));
    }
    let (post, seed) = match args.method {
        MethodName::Exact => (posterior_exact(&data, &priors, &log.domain)?, None),
        MethodName::Gibbs => {
            let post = gibbs_posterior(&data, &priors, &log.domain, &gibbs_config(&args.gibbs, args.seed))?;
            let seed = match post.method() {
                gem_core::inference::InferenceMethod::Gibbs { seed, .. } => Some(*seed),
                _ => None,
            };
            (post, seed)
        }
        MethodName::FixedEta => {
            let eta = args
                .eta_fixed
                .ok_or_else(|| CliError::Usage("--method fixed-eta requires --eta-fixed".into()))?;
            (fixed_noise_posterior(&data, &priors, &log.domain, eta)?, None)
        }
    };
    let doc = PosteriorDocument::new(&post, log.domain.schema(), dataset_checksum(&data), data.len());
    write_json(&args.out, &doc)?;

    let snapshot = json!({
        "method": to_value(post.method()),
        "participant": args.participant,
        "priors": to_value(&priors),
    });
    let mut manifest = RunManifest::new("infer", seed, snapshot).input(&args.data)?;
    if let Some(p) = &args.priors {
        manifest = manifest.input(p)?;
    }
    manifest.finish(&args.out, start.elapsed())?;
    Ok(())
}

#[derive(Debug, Clone, Copy)]
enum Method {
    Exact,
    Gibbs,
    Fixed(f64),
}

fn methods(args: &EvalArgs) -> CliResult<Vec<(String, Method)>> {
    let mut out = Vec::new();
    for m in &args.method {
        match m {
            MethodName::Exact => out.push(("exact".to_string(), Method::Exact)),
            MethodName::Gibbs => out.push(("gibbs".to_string(), Method::Gibbs)),
            MethodName::FixedEta => {
                for eta in &args.eta_fixed {
                    NoiseLevel::new(*eta)?;
                    out.push((format!("fixed-{eta}"), Method::Fixed(*eta)));
                }
            }
        }
    }
    Ok(out)
}

/// Independent seed for one evaluation cell.
fn cell_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

fn metric_rows(
    budget: usize,
    run: usize,
    tag: &str,
    post: &JointPosterior,
    truth: &BlindSpotMask,
) -> Vec<CurveRow> {
    let argmax = post.argmax();
    [
        ("kl", kl_to_truth(post, truth)),
        ("argmax-accuracy", (argmax.mask == *truth) as u8 as f64),
        ("eta-argmax", argmax.eta.value()),
        ("mask-mass", post.mask_probability(truth)),
    ]
    .into_iter()
    .map(|(name, value)| CurveRow {
        budget,
        run,
        metric: format!("{tag}:{name}"),
        value,
    })
    .collect()
}

fn run_methods(
    evidence: &Evidence,
    n: usize,
    methods: &[(String, Method)],
    gibbs: &GibbsArgs,
    seed: u64,
    run: usize,
    truth: &BlindSpotMask,
) -> Result<Vec<CurveRow>, GemError> {
    let mut rows = Vec::new();
    for (tag, m) in methods {
        let post = match m {
            Method::Exact => evidence.exact(n)?,
            Method::Gibbs => evidence.gibbs(n, &gibbs_config(gibbs, Some(seed)))?,
            Method::Fixed(eta) => evidence.fixed_noise(n, *eta)?,
        };
        rows.extend(metric_rows(n, run, tag, &post, truth));
    }
    Ok(rows)
}

pub fn eval_budget(args: &EvalArgs) -> CliResult<()> {
    let start = Instant::now();
    if args.budgets.is_empty() || args.budgets[0] == 0 || args.budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage("--budgets must be positive and strictly ascending".into()));
    }
    if args.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let methods = methods(args)?;
    gibbs_config(&args.gibbs, Some(0)).validate()?;

    let (outcomes, snapshot): (Vec<Result<Vec<CurveRow>, String>>, Value) = match args.domain {
        DomainName::Gridworld => {
            let cfg = config::grid_config(args.config.as_deref())?;
            let (truth, _) = cfg.validate()?;
            let priors = Priors::uniform(3);
            let cells: Vec<(usize, usize, usize)> = args
                .budgets
                .iter()
                .enumerate()
                .flat_map(|(b, n)| (0..args.runs).map(move |r| (b, *n, r)))
                .collect();
            let outcomes = cells
                .par_iter()
                .map(|(b, n, r)| {
                    let seed = cell_seed(args.seed, ((*b as u64) << 32) | *r as u64);
                    let cell = GridConfig { seed, ..cfg.clone() };
                    generate_grid_dataset(&cell, *n)
                        .and_then(|(world, data)| Evidence::new(&data, &priors, &world, DEFAULT_ENUMERATION_CAP))
                        .and_then(|ev| run_methods(&ev, *n, &methods, &args.gibbs, seed, *r, &truth))
                        .map_err(|e| format!("budget {n} run {r}: {e}"))
                })
                .collect();
            (outcomes, json!({"domain": "gridworld", "grid": to_value(&cfg)}))
        }
        DomainName::Kitchen => {
            let run_cfg = config::kitchen_run(args.config.as_deref())?;
            let kitchen = Kitchen::new(run_cfg.kitchen.clone())?;
            let sim = SimulationConfig {
                participants: args.runs,
                seed: args.seed,
                ..run_cfg.simulation.clone()
            };
            let longest = *args.budgets.last().expect("non-empty");
            if longest > sim.per_participant {
                return Err(CliError::Usage(format!(
                    "budget {longest} exceeds the {} tuples simulated per participant",
                    sim.per_participant
                )));
            }
            let truth = sim.mask.clone().unwrap_or_else(|| kitchen.confusable_mask());
            let domain = AnyDomain::from(kitchen.clone());
            let priors = config::priors(None, &domain)?;
            let per_run: Vec<Result<Vec<CurveRow>, String>> = (0..args.runs)
                .into_par_iter()
                .map(|r| {
                    let seed = cell_seed(args.seed, r as u64);
                    simulate_participant(&kitchen, &sim, r)
                        .and_then(|data| Evidence::new(&data, &priors, &kitchen, DEFAULT_ENUMERATION_CAP))
                        .and_then(|ev| {
                            let mut rows = Vec::new();
                            for n in &args.budgets {
                                rows.extend(run_methods(&ev, *n, &methods, &args.gibbs, seed, r, &truth)?);
                            }
                            Ok(rows)
                        })
                        .map_err(|e| format!("participant {r}: {e}"))
                })
                .collect();
            // a failed participant fails every budget of that run
            let outcomes = per_run
                .into_iter()
                .flat_map(|o| match o {
                    Ok(rows) => vec![Ok(rows)],
                    Err(e) => vec![Err(e); args.budgets.len()],
                })
                .collect();
            (outcomes, json!({"domain": "kitchen", "run": to_value(&run_cfg)}))
        }
    };

    let total = outcomes.len();
    let mut table = CurveTable::default();
    let mut failed = Vec::new();
    for o in outcomes {
        match o {
            Ok(rows) => table.rows.extend(rows),
            Err(e) => failed.push(e),
        }
    }
    table.sort();
    table.write_csv(create(&args.out)?)?;

    let tags: Vec<&str> = methods.iter().map(|(t, _)| t.as_str()).collect();
    let mut snapshot = snapshot;
    snapshot["budgets"] = json!(args.budgets);
    snapshot["runs"] = json!(args.runs);
    snapshot["methods"] = json!(tags);
    snapshot["gibbs"] = to_value(&gibbs_config(&args.gibbs, None));
    RunManifest::new("eval-budget", Some(args.seed), snapshot).finish(&args.out, start.elapsed())?;

    if failed.is_empty() {
        Ok(())
    } else {
        failed.dedup();
        Err(CliError::Partial { failed, total })
    }
}

fn named_state(domain: &dyn Domain, state: &State) -> Value {
    let schema = domain.schema();
    let map: Map<String, Value> = schema
        .features()
        .iter()
        .enumerate()
        .map(|(j, f)| (f.name.clone(), json!(schema.value_name(j, state.get(j)))))
        .collect();
    Value::Object(map)
}

fn resolve_feature(domain: &AnyDomain, name: &str) -> CliResult<usize> {
    if let (Some(k), "salt-location") = (domain.as_kitchen(), name) {
        let salt = k
            .ingredient_index("salt")
            .ok_or_else(|| CliError::Usage("this kitchen has no salt".into()))?;
        return Ok(Kitchen::location_feature(k.location_of(salt)));
    }
    domain
        .schema()
        .feature_index(name)
        .ok_or_else(|| CliError::Usage(format!("unknown feature `{name}`")))
}

pub fn query_implicit(args: &QueryArgs) -> CliResult<()> {
    let start = Instant::now();
    let log = open_log(&args.data)?;
    let data = select_participant(&log, args.participant.as_deref())?;
    let text = fs::read_to_string(&args.posterior).map_err(|e| CliError::io(&args.posterior, e))?;
    let doc = PosteriorDocument::from_json(&text)?;
    let checksum = dataset_checksum(&data);
    if doc.data_checksum != checksum || doc.schema_id != data.schema_id() {
        return Err(GemError::ChecksumMismatch(format!(
            "posterior was computed from data {} but {} hashes to {checksum}",
            doc.data_checksum,
            args.data.display()
        ))
        .into());
    }
    let post = doc.to_posterior()?;
    let domain = &log.domain;
    let schema = domain.schema();

    let out = if let Some(index) = args.index {
        let implicit = implicit_posterior(&data, index, &post, domain)?;
        let demo = data.get(index)?;
        let marginals: Map<String, Value> = schema
            .features()
            .iter()
            .zip(&implicit.marginals)
            .enumerate()
            .map(|(j, (f, m))| {
                let values: Map<String, Value> = m
                    .iter()
                    .enumerate()
                    .map(|(v, p)| (schema.value_name(j, v as u16).to_string(), json!(p)))
                    .collect();
                (f.name.clone(), Value::Object(values))
            })
            .collect();
        json!({
            "format-version": gem_core::io::FORMAT_VERSION,
            "kind": "implicit-state",
            "index": index,
            "state": named_state(domain, &demo.state),
            "action": domain.action_name(demo.action),
            "error": demo.error as u8,
            "distribution": implicit
                .distribution
                .iter()
                .map(|(s, p)| json!({"state": named_state(domain, s), "p": p}))
                .collect::<Vec<_>>(),
            "marginals": marginals,
        })
    } else {
        let name = args.feature.as_deref().expect("clap requires index or feature");
        let feature = resolve_feature(domain, name)?;
        let selection = if args.errors_only {
            Selection::ErrorsOnly
        } else {
            Selection::All
        };
        let (marginal, used) = aggregate_feature_marginal(&data, &post, domain, feature, selection)?;
        let mode = (0..marginal.len())
            .max_by(|a, b| marginal[*a].total_cmp(&marginal[*b]))
            .map(|v| schema.value_name(feature, v as u16));
        json!({
            "format-version": gem_core::io::FORMAT_VERSION,
            "kind": "feature-marginal",
            "feature": schema.features()[feature].name,
            "selection": if args.errors_only { "errors-only" } else { "all" },
            "datapoints": used,
            "values": marginal
                .iter()
                .enumerate()
                .map(|(v, p)| json!({"value": schema.value_name(feature, v as u16), "p": p}))
                .collect::<Vec<_>>(),
            "mode": mode,
        })
    };
    write_json(&args.out, &out)?;
    let snapshot = json!({
        "index": args.index,
        "feature": args.feature,
        "errors-only": args.errors_only,
        "participant": args.participant,
    });
    RunManifest::new("query-implicit", None, snapshot)
        .input(&args.data)?
        .input(&args.posterior)?
        .finish(&args.out, start.elapsed())?;
    Ok(())
}
