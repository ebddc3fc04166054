//! Command implementations. Every artifact embeds the resolved settings
//! under `config`, so a run can be reproduced from its outputs alone.

use super::config::{
    chain_config, load_file_config, model_spec, parse_design, parse_family, parse_truth,
    resolve_globals, Globals,
};
use super::output::{ensure_dir, write_draws_csv, write_json, write_recover_csv, write_text};
use super::{Cli, Command};
use crate::domain::{load_dataset, summarize, write_dataset, Dataset};
use crate::error::{Error, Result};
use crate::mcmc::summary::{diagnose, prior_sensitivity, summarize_posterior};
use crate::mcmc::{run_mcmc, ChainConfig};
use crate::ml::{compare_overdispersion, fit_ml, FitOptions};
use crate::model::registry;
use crate::model::{FamilyKind, ModelSpec, PriorSpec};
use crate::power::{
    anova_power, anova_power_simulated, difference_parameter, required_n, PowerScenario,
};
use crate::recover::{recover_study, RecoverConfig, RecoverMethod};
use crate::sim::{design::DesignPreset, simulate_dataset, TrueParams};
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};

/// Runs the parsed CLI; returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let file = load_file_config(cli.config.as_deref())?;
    let globals = resolve_globals(&cli, &file);
    if globals.threads > 0 {
        // build_global fails harmlessly if a pool already exists (tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(globals.threads)
            .build_global();
    }
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args, &file, &globals),
        Command::Fit(args) => cmd_fit(args, &file, &globals),
        Command::Summarize(args) => cmd_summarize(args, &file, &globals),
        Command::Power(args) => cmd_power(args, &file, &globals),
        Command::Recover(args) => cmd_recover(args, &file, &globals),
        Command::ListFamilies => {
            for f in registry::all() {
                println!("{:<16} {}", f.name(), f.describe());
            }
            Ok(0)
        }
    }
}

#[derive(Debug, Serialize)]
struct Provenance {
    command: String,
    seed: u64,
    out_dir: String,
    strict: bool,
    settings: serde_json::Value,
}

fn provenance(command: &str, globals: &Globals, settings: serde_json::Value) -> Provenance {
    Provenance {
        command: command.to_string(),
        seed: globals.seed,
        out_dir: globals.out_dir.display().to_string(),
        strict: globals.strict,
        settings,
    }
}

fn load_data(fields: Option<&Path>, vessels: Option<&Path>) -> Result<Dataset> {
    let fields = fields.ok_or_else(|| Error::Config("missing --fields path".into()))?;
    let vessels = vessels.ok_or_else(|| Error::Config("missing --vessels path".into()))?;
    load_dataset(fields, vessels)
}

fn cmd_simulate(
    args: &super::SimulateArgs,
    file: &super::config::FileConfig,
    globals: &Globals,
) -> Result<i32> {
    let family_name = args
        .family
        .clone()
        .or_else(|| file.simulate.family.clone())
        .ok_or_else(|| Error::Config("missing --family".into()))?;
    let family = parse_family(&family_name)?;
    let design_str = args
        .design
        .clone()
        .or_else(|| file.simulate.design.clone())
        .unwrap_or_else(|| "study".to_string());
    let design = parse_design(&design_str)?;
    let truth_str = args
        .truth
        .clone()
        .or_else(|| file.simulate.truth.clone())
        .unwrap_or_else(|| "reference".to_string());
    let truth = parse_truth(family, &truth_str)?;

    let data = simulate_dataset(&truth, &design, globals.seed)?;

    ensure_dir(&globals.out_dir)?;
    let fields_path = globals.out_dir.join("fields.csv");
    let vessels_path = globals.out_dir.join("vessels.csv");
    write_dataset(&data, &fields_path, &vessels_path)?;

    let settings = json!({
        "family": family.name(),
        "design": design_str,
        "truth_source": truth_str,
    });
    let truth_doc = json!({
        "config": provenance("simulate", globals, settings),
        "spec": truth.spec,
        "theta": truth.theta,
        "seed": globals.seed,
        "design": design,
        "n_specimens": data.n_specimens(),
        "n_fields": data.n_fields(),
        "n_vessels": data.n_vessels(),
    });
    write_json(&globals.out_dir.join("truth.json"), &truth_doc)?;
    println!(
        "simulated {} specimens, {} fields, {} vessels -> {}",
        data.n_specimens(),
        data.n_fields(),
        data.n_vessels(),
        globals.out_dir.display()
    );
    Ok(0)
}

fn resolved_fit_settings(
    family: FamilyKind,
    method: &str,
    spec: &ModelSpec,
    chain: Option<&ChainConfig>,
    nodes: usize,
    fields: &Path,
    vessels: &Path,
) -> serde_json::Value {
    json!({
        "family": family.name(),
        "method": method,
        "spec": spec,
        "chain": chain,
        "quad_nodes": nodes,
        "fields": fields.display().to_string(),
        "vessels": vessels.display().to_string(),
    })
}

fn cmd_fit(
    args: &super::FitArgs,
    file: &super::config::FileConfig,
    globals: &Globals,
) -> Result<i32> {
    let family_name = args
        .family
        .clone()
        .or_else(|| file.fit.family.clone())
        .ok_or_else(|| Error::Config("missing --family".into()))?;
    let family = parse_family(&family_name)?;
    let method = args
        .method
        .clone()
        .or_else(|| file.fit.method.clone())
        .unwrap_or_else(|| "ml".to_string());
    let fields = args.fields.clone().or_else(|| file.fit.fields.clone());
    let vessels = args.vessels.clone().or_else(|| file.fit.vessels.clone());
    let data = load_data(fields.as_deref(), vessels.as_deref())?;
    let fields = fields.unwrap();
    let vessels = vessels.unwrap();

    let spec = model_spec(
        family,
        args.rho_zero || file.fit.rho_zero.unwrap_or(false),
        args.delta_equal || file.fit.delta_equal.unwrap_or(false),
        args.fine_delta || file.fit.fine_delta.unwrap_or(false),
    )?;
    let nodes = args.nodes.or(file.fit.nodes).unwrap_or(20);
    ensure_dir(&globals.out_dir)?;

    match method.as_str() {
        "ml" => {
            let mut opts = FitOptions::default();
            opts.quad_nodes = nodes;
            let strategy = registry::family(family);
            let init = strategy.initial_params(&spec, &data);
            let fit = fit_ml(&spec, &data, &init, &opts)?;

            let comparison = if family == FamilyKind::LvdNegBin {
                let report = compare_overdispersion(&data, &opts)?;
                Some(json!({
                    "poisson_loglik": report.poisson.max_loglik,
                    "negbin_loglik": report.negbin.max_loglik,
                    "delta_loglik": report.delta_loglik,
                    "dispersion": report.dispersion,
                }))
            } else {
                None
            };

            let settings =
                resolved_fit_settings(family, "ml", &spec, None, nodes, &fields, &vessels);
            let doc = json!({
                "config": provenance("fit", globals, settings),
                "fit": fit,
                "effects": crate::model::effect_table(&fit.theta, &spec),
                "poisson_comparison": comparison,
            });
            write_json(&globals.out_dir.join("fit_summary.json"), &doc)?;
            println!(
                "ml fit: family={} loglik={:.4} converged={} iterations={}",
                family.name(),
                fit.max_loglik,
                fit.converged,
                fit.iterations
            );
            if globals.strict && !fit.converged {
                eprintln!("strict mode: optimizer did not converge");
                return Ok(1);
            }
            Ok(0)
        }
        "mcmc" => {
            let cc = chain_config(
                globals.seed,
                args.burn_in.or(file.fit.burn_in),
                args.keep.or(file.fit.keep),
                args.thin.or(file.fit.thin),
                args.chains.or(file.fit.chains),
            );
            let priors = PriorSpec::default();
            let strategy = registry::family(family);
            let chains = run_mcmc(strategy, &spec, &priors, &data, &cc)?;
            let fit = summarize_posterior(&chains);
            let report = diagnose(&chains);

            let sensitivity =
                if args.prior_sensitivity || file.fit.prior_sensitivity.unwrap_or(false) {
                    Some(
                        prior_sensitivity(strategy, &spec, &priors, &data, &cc)?
                            .into_iter()
                            .map(|(label, f)| json!({ "priors": label, "fit": f }))
                            .collect::<Vec<_>>(),
                    )
                } else {
                    None
                };

            let settings =
                resolved_fit_settings(family, "mcmc", &spec, Some(&cc), nodes, &fields, &vessels);
            let doc = json!({
                "config": provenance("fit", globals, settings),
                "fit": fit,
                "diagnostics": report,
                "prior_sensitivity": sensitivity,
            });
            write_json(&globals.out_dir.join("fit_summary.json"), &doc)?;
            write_draws_csv(&globals.out_dir.join("draws.csv"), &chains)?;
            write_text(&globals.out_dir.join("diagnostics.txt"), &report.render())?;
            println!(
                "mcmc fit: family={} chains={} kept={} flagged={}",
                family.name(),
                cc.n_chains,
                cc.kept_per_chain() * cc.n_chains,
                report.flagged.len()
            );
            if globals.strict && !report.flagged.is_empty() {
                eprintln!("strict mode: {} diagnostics flagged", report.flagged.len());
                return Ok(1);
            }
            Ok(0)
        }
        other => Err(Error::Config(format!(
            "unknown method '{other}' (expected ml or mcmc)"
        ))),
    }
}

fn cmd_summarize(
    args: &super::SummarizeArgs,
    file: &super::config::FileConfig,
    globals: &Globals,
) -> Result<i32> {
    let fields = args
        .fields
        .clone()
        .or_else(|| file.summarize.fields.clone());
    let vessels = args
        .vessels
        .clone()
        .or_else(|| file.summarize.vessels.clone());
    let data = load_data(fields.as_deref(), vessels.as_deref())?;
    let table = summarize(&data)?;
    print!("{}", table.render());

    ensure_dir(&globals.out_dir)?;
    let settings = json!({
        "fields": fields.unwrap().display().to_string(),
        "vessels": vessels.unwrap().display().to_string(),
    });
    let doc = json!({
        "config": provenance("summarize", globals, settings),
        "summary": table,
    });
    write_json(&globals.out_dir.join("summary.json"), &doc)?;
    Ok(0)
}

fn cmd_power(
    args: &super::PowerArgs,
    file: &super::config::FileConfig,
    globals: &Globals,
) -> Result<i32> {
    let means_str = args
        .means
        .clone()
        .or_else(|| file.power.means.clone())
        .unwrap_or_else(|| "2.6,5.0,10.0".to_string());
    let means: Vec<f64> = means_str
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad mean '{t}'")))
        })
        .collect::<Result<_>>()?;
    let sd = args.sd.or(file.power.sd).unwrap_or(7.5);
    let n = args.n.or(file.power.n).unwrap_or(25);
    let alpha = args.alpha.or(file.power.alpha).unwrap_or(0.05);
    let target = args.target.or(file.power.target);
    let oracle_reps = args.oracle_reps.or(file.power.oracle_reps);

    let mut scenario = PowerScenario::new(means.clone(), sd, n);
    scenario.alpha = alpha;
    let diff = difference_parameter(&scenario)?;
    let power = anova_power(&scenario)?;
    let needed = target.map(|t| required_n(&scenario, t)).transpose()?;
    let oracle = oracle_reps
        .map(|r| anova_power_simulated(&scenario, r, globals.seed))
        .transpose()?;

    println!(
        "{:<22} {:>6} {:>4} {:>6} {:>10} {:>8} {:>10} {:>10}",
        "means", "sd", "n", "alpha", "diff_param", "power", "required_n", "mc_power"
    );
    println!(
        "{:<22} {:>6} {:>4} {:>6} {:>10.4} {:>8.4} {:>10} {:>10}",
        means_str,
        sd,
        n,
        alpha,
        diff,
        power,
        needed.map_or("-".to_string(), |v| v.to_string()),
        oracle.map_or("-".to_string(), |v| format!("{v:.4}")),
    );

    ensure_dir(&globals.out_dir)?;
    let settings = json!({
        "means": means, "sd": sd, "n": n, "alpha": alpha,
        "target": target, "oracle_reps": oracle_reps,
    });
    let doc = json!({
        "config": provenance("power", globals, settings),
        "difference_parameter": diff,
        "power": power,
        "required_n": needed,
        "mc_power": oracle,
    });
    write_json(&globals.out_dir.join("power.json"), &doc)?;
    Ok(0)
}

fn cmd_recover(
    args: &super::RecoverArgs,
    file: &super::config::FileConfig,
    globals: &Globals,
) -> Result<i32> {
    let family_name = args
        .family
        .clone()
        .or_else(|| file.recover.family.clone())
        .ok_or_else(|| Error::Config("missing --family".into()))?;
    let family = parse_family(&family_name)?;
    let method = args
        .method
        .clone()
        .or_else(|| file.recover.method.clone())
        .unwrap_or_else(|| "mcmc".to_string());
    let replicates = args
        .replicates
        .or(file.recover.replicates)
        .ok_or_else(|| Error::Config("missing --replicates".into()))?;
    if replicates == 0 {
        return Err(Error::Config("replicates must be positive".into()));
    }
    let design_str = args
        .design
        .clone()
        .or_else(|| file.recover.design.clone())
        .unwrap_or_else(|| "study".to_string());
    let design: DesignPreset = parse_design(&design_str)?;
    let truth_str = args
        .truth
        .clone()
        .or_else(|| file.recover.truth.clone())
        .unwrap_or_else(|| "reference".to_string());
    let truth: TrueParams = parse_truth(family, &truth_str)?;

    let rec_method = match method.as_str() {
        "ml" => RecoverMethod::Ml(FitOptions::default()),
        "mcmc" => RecoverMethod::Mcmc(chain_config(
            0,
            args.burn_in.or(file.recover.burn_in).or(Some(5_000)),
            args.keep.or(file.recover.keep).or(Some(5_000)),
            args.thin.or(file.recover.thin).or(Some(5)),
            args.chains.or(file.recover.chains).or(Some(2)),
        )),
        other => {
            return Err(Error::Config(format!(
                "unknown method '{other}' (expected ml or mcmc)"
            )))
        }
    };

    let cfg = RecoverConfig {
        truth: truth.clone(),
        design,
        replicates,
        seed: globals.seed,
        method: rec_method,
        conditional_contrast: args.conditional_contrast
            || file.recover.conditional_contrast.unwrap_or(false),
    };
    let report = recover_study(&cfg)?;

    ensure_dir(&globals.out_dir)?;
    let settings = json!({
        "family": family.name(),
        "method": method,
        "replicates": replicates,
        "design": design_str,
        "truth_source": truth_str,
        "conditional_contrast": cfg.conditional_contrast,
    });
    let doc = json!({
        "config": provenance("recover", globals, settings),
        "truth": truth,
        "report": report,
    });
    write_json(&globals.out_dir.join("recover_report.json"), &doc)?;
    write_recover_csv(&globals.out_dir.join("recover_report.csv"), &report)?;

    println!(
        "{:<14} {:>10} {:>12} {:>10} {:>10} {:>9}",
        "parameter", "truth", "mean_est", "bias", "rmse", "coverage"
    );
    for r in &report.rows {
        println!(
            "{:<14} {:>10.4} {:>12.4} {:>10.4} {:>10.4} {:>9.3}",
            r.name, r.truth, r.mean_estimate, r.bias, r.rmse, r.coverage
        );
    }
    if let Some(neg) = report.rho_negative {
        println!("rho median negative in {neg}/{replicates} replicates");
    }
    if let Some(c) = &report.contrast {
        println!(
            "conditional contrast: mean gamma {:.3}, positive share {:.2}, exp(beta) = [{:.3}, {:.3}, {:.3}]",
            c.mean_gamma,
            c.share_gamma_positive,
            c.mean_exp_beta[0],
            c.mean_exp_beta[1],
            c.mean_exp_beta[2]
        );
    }
    Ok(0)
}

/// Writes a `PathBuf` based artifact listing for tests.
pub fn artifact_paths(out_dir: &Path) -> Vec<PathBuf> {
    [
        "fields.csv",
        "vessels.csv",
        "truth.json",
        "fit_summary.json",
        "draws.csv",
    ]
    .iter()
    .map(|n| out_dir.join(n))
    .collect()
}
