mod cli;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use cli::args::{Cli, Command};
use cli::{commands, labels, parse_json, render, InputError};

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            common,
            inputs,
            label,
            split,
            emit_heads,
        } => {
            let mut cfg = common.base_config()?;
            inputs.apply(&mut cfg);
            label.apply(&mut cfg);
            if let Some(s) = split {
                cfg.split = s;
            }
            cfg.emit_heads |= emit_heads;
            let m = labels::generate(&cfg)?;
            println!("{} frames, {} centerlines, manifest hash {}", m.counts.frames, m.counts.centerlines, m.hash);
        }
        Command::SampleTrain { common, labels, window } => {
            let mut cfg = common.base_config()?;
            cfg.input = Some(labels.clone());
            if let Some(w) = window {
                cfg.window = w;
            }
            commands::sample_train(&cfg, &labels)?;
        }
        Command::Filter {
            common,
            labels: dir,
            calibration,
            label,
        } => {
            let mut cfg = common.base_config()?;
            cfg.input = Some(dir.clone());
            if calibration.is_some() {
                cfg.calibration = calibration;
            }
            label.apply(&mut cfg);
            let m = labels::filter(&cfg, &dir)?;
            println!("{} frames, {} centerlines, manifest hash {}", m.counts.frames, m.counts.centerlines, m.hash);
        }
        Command::Decode {
            common,
            heads,
            grid,
            conf_threshold,
            embed_radius,
            min_cells,
        } => {
            let mut cfg = common.base_config()?;
            cfg.input = Some(heads.clone());
            if let Some(g) = grid {
                cfg.grid = g;
            }
            let d = &mut cfg.decode;
            d.conf_threshold = conf_threshold.unwrap_or(d.conf_threshold);
            d.embed_radius = embed_radius.unwrap_or(d.embed_radius);
            d.min_cells = min_cells.unwrap_or(d.min_cells);
            let m = commands::decode(&cfg, &heads)?;
            println!("{} frames, {} polylines", m.counts.frames, m.counts.centerlines);
        }
        Command::Eval {
            common,
            pred,
            gt,
            matching,
        } => {
            let mut cfg = common.base_config()?;
            matching.apply(&mut cfg);
            commands::eval(&cfg, &pred, &gt)?;
        }
        Command::Render { labels, image, out } => {
            let n = render::render(&labels, image.as_deref(), &out)?;
            log::info!("rendered {n} labels");
        }
        Command::Stats { manifests, out } => {
            commands::stats(&manifests, out.as_deref())?;
        }
        Command::Synth {
            scene,
            n_lanes,
            lane_spacing,
            curvature,
            lane_length,
            frames,
            preset,
            seed,
            occluders,
            out,
        } => {
            let mut spec = match &scene {
                Some(p) => parse_json(p)?,
                None => clf::synth::SceneSpec::default(),
            };
            spec.n_lanes = n_lanes.unwrap_or(spec.n_lanes);
            spec.lane_spacing = lane_spacing.unwrap_or(spec.lane_spacing);
            spec.curvature = curvature.unwrap_or(spec.curvature);
            spec.lane_length = lane_length.unwrap_or(spec.lane_length);
            spec.n_frames = frames.unwrap_or(spec.n_frames);
            spec.seed = seed.unwrap_or(spec.seed);
            if let Some(p) = preset {
                spec.camera_preset = p;
            }
            if !occluders.is_empty() {
                spec.occluders = occluders;
            }
            let n = commands::synth(&spec, &out)?;
            println!("{n} frames written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CLF_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<InputError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
