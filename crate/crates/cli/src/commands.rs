//! Command bodies. Each returns a [`CliError`] whose exit code the binary
//! passes on.

use std::fmt::Write as _;
use std::path::Path;

use ttvsr_bench::{
    cost_trajectory, cost_vanilla, csv_report, measure_similarity_macs, AttentionPath, AttnShape,
};
use ttvsr_core::motion::{block_match_flow, read_flo, write_flo, Flow};
use ttvsr_core::pipeline::metrics::{psnr, ssim, SsimMode};
use ttvsr_core::pipeline::weights::{load_weights, save_weights, WeightSet};
use ttvsr_core::pipeline::{
    output_digest, BlockMatcher, FlowProvider, FlowTable, Pipeline, PipelineConfig,
};
use ttvsr_core::trajectory::{oracle_track, LocationMapStack};
use ttvsr_core::FeatureMap;

use crate::frames::{load_sequence, save_sequence};
use crate::synth::synthesize;
use crate::{
    BenchArgs, CliError, FlowArgs, InitWeightsArgs, MatchArgs, NetArgs, SrArgs, SynthArgs, TrajArgs,
};

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    if a.frames == 0 {
        return Err(CliError::Input("need ≥1 frame".into()));
    }
    let (h, w) = a.size;
    if h == 0 || w == 0 {
        return Err(CliError::Input(format!("frame size {h}x{w} is empty")));
    }
    save_sequence(&synthesize(a.kind, a.frames, h, w, a.seed), &a.out)
}

fn forward_flow_name(k: usize) -> String {
    format!("fwd_{k:05}.flo")
}

fn backward_flow_name(k: usize) -> String {
    format!("bwd_{k:05}.flo")
}

/// Writes `fwd_k.flo` (frame k into frame k-1) and `bwd_k.flo` (frame k into
/// frame k+1).
pub fn cmd_flow(a: &FlowArgs) -> Result<(), CliError> {
    let frames = load_sequence(&a.in_dir)?;
    std::fs::create_dir_all(&a.out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", a.out.display())))?;
    let (p, r) = (a.matching.patch, a.matching.radius);
    for k in 1..frames.len() {
        let fwd = block_match_flow(&frames[k], &frames[k - 1], p, r)?;
        write_flo(&fwd, a.out.join(forward_flow_name(k)))?;
        let bwd = block_match_flow(&frames[k - 1], &frames[k], p, r)?;
        write_flo(&bwd, a.out.join(backward_flow_name(k - 1)))?;
    }
    Ok(())
}

fn load_flow_table(dir: &Path, frames: usize, bidirectional: bool) -> Result<FlowTable, CliError> {
    let mut table = FlowTable::default();
    for k in 1..frames {
        table
            .forward
            .push(read_flo(dir.join(forward_flow_name(k)))?);
        if bidirectional {
            table
                .backward
                .push(read_flo(dir.join(backward_flow_name(k - 1)))?);
        }
    }
    Ok(table)
}

fn net_config(net: &NetArgs) -> PipelineConfig {
    PipelineConfig {
        channels: net.channels,
        extract_blocks: net.extract_blocks,
        recon_blocks: net.recon_blocks,
        bidirectional: net.bidirectional,
        ..PipelineConfig::default()
    }
}

fn block_matcher(m: &MatchArgs) -> BlockMatcher {
    BlockMatcher {
        patch: m.patch,
        radius: m.radius,
    }
}

/// Returns the output digest when `--golden-hash` is set.
pub fn cmd_sr(a: &SrArgs) -> Result<Option<String>, CliError> {
    let frames = load_sequence(&a.in_dir)?;
    let cfg = PipelineConfig {
        seed: a.seed,
        coarse_interval: a.interval,
        map_ring_limit: a.ring_limit,
        match_patch: a.matching.patch,
        match_radius: a.matching.radius,
        ..net_config(&a.net)
    };
    let weights = match &a.weights {
        Some(path) => load_weights(path, &cfg)?,
        None => WeightSet::seeded(&cfg, a.seed),
    };
    let mut pipeline = Pipeline::new(cfg, &weights)?;
    let outputs = match &a.flows {
        Some(dir) => {
            let table = load_flow_table(dir, frames.len(), a.net.bidirectional)?;
            pipeline.run(&frames, &table)?
        }
        None => pipeline.run(&frames, &block_matcher(&a.matching) as &dyn FlowProvider)?,
    };
    save_sequence(&outputs, &a.out_dir)?;

    if let Some(gt_dir) = &a.gt {
        let gt = load_sequence(gt_dir)?;
        write_file(
            &a.out_dir.join("metrics.csv"),
            &metrics_csv(&outputs, &gt, a.luma)?,
        )?;
    }
    if a.golden_hash {
        let digest = output_digest(&outputs);
        println!("{digest}");
        return Ok(Some(digest));
    }
    Ok(None)
}

/// `frame_index,psnr_db,ssim` on unquantized outputs.
pub fn metrics_csv(
    outputs: &[FeatureMap],
    gt: &[FeatureMap],
    luma: bool,
) -> Result<String, CliError> {
    if gt.len() != outputs.len() {
        return Err(CliError::Input(format!(
            "{} ground-truth frames for {} outputs",
            gt.len(),
            outputs.len()
        )));
    }
    let mode = if luma { SsimMode::Luma } else { SsimMode::Rgb };
    let mut csv = String::from("frame_index,psnr_db,ssim\n");
    for (k, (o, g)) in outputs.iter().zip(gt).enumerate() {
        let p = psnr(o, g)?;
        let s = ssim(o, g, mode)?;
        writeln!(csv, "{k},{p},{s:.6}").unwrap();
    }
    Ok(csv)
}

/// Returns the largest gap between the two trajectories.
pub fn cmd_traj(a: &TrajArgs) -> Result<f32, CliError> {
    let frames = load_sequence(&a.in_dir)?;
    let (h, w) = (frames[0].height(), frames[0].width());
    let (m, n) = a.cell;
    if m >= h || n >= w {
        return Err(CliError::Input(format!(
            "cell ({m},{n}) outside {h}x{w} frame"
        )));
    }
    let mut stack = LocationMapStack::new(h, w);
    let mut flows: Vec<Flow> = Vec::with_capacity(frames.len().saturating_sub(1));
    for k in 1..frames.len() {
        let f = block_match_flow(
            &frames[k],
            &frames[k - 1],
            a.matching.patch,
            a.matching.radius,
        )?;
        stack.update(&f)?;
        flows.push(f);
    }
    flows.reverse();
    let maps = stack.trajectory_of(m, n)?;
    let oracle = oracle_track(&flows, m, n)?;
    let gap = maps.max_gap(&oracle);
    let text = format!(
        "# location maps\n{}# oracle\n{}max_gap {:.6}\n",
        maps.to_text(),
        oracle.to_text(),
        gap
    );
    write_file(&a.out, &text)?;
    println!("max_gap {gap:.6}");
    Ok(gap)
}

pub fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let shape = AttnShape::new(a.frames, a.channels, a.height, a.width, a.dh, a.dw)?;
    if a.measure {
        for (path, want) in [
            (AttentionPath::Trajectory, cost_trajectory(&shape)),
            (AttentionPath::Vanilla, cost_vanilla(&shape)),
        ] {
            let got = measure_similarity_macs(&shape, path, 0)?;
            if got != want {
                return Err(CliError::Input(format!(
                    "{path:?} pass counted {got} MACs, expected {want}"
                )));
            }
            eprintln!("{path:?}: measured {got} MACs");
        }
    }
    let report = csv_report(&[shape]);
    match &a.out {
        Some(path) => write_file(path, &report),
        None => {
            print!("{report}");
            Ok(())
        }
    }
}

pub fn cmd_init_weights(a: &InitWeightsArgs) -> Result<(), CliError> {
    let cfg = net_config(&a.net);
    let w = if a.zeros {
        WeightSet::zeros(&cfg)
    } else {
        WeightSet::seeded(&cfg, a.seed)
    };
    save_weights(&w, &a.out).map_err(CliError::from)
}
