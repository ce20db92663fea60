use std::fmt::Write as _;
use std::path::Path;

use evflow::io::{
    read_camera, read_depth, read_events, read_flo, read_frame_pgm, read_trajectory, write_event_image, write_flo,
    write_frame_pgm,
};
use evflow::loss::{loss_gradient, total_loss};
use evflow::motion::{interval_velocity, select_depth};
use evflow::planefit::estimate_sparse_flow;
use evflow::{
    event_mask, slice_window, CharbonnierParams, Convention, Descent, EventStream, FlowField, Frame, GtFlowOptions,
    GtFlowRequest, LossWeights, Mask, PlaneFitOptions, Reduction, SolverOptions,
};
use serde_json::json;

use crate::error::{read_bytes, read_text, require_files, require_output_dirs, write_bytes, CliError, CliResult};
use crate::{
    ConventionArg, DescentArg, EncodeArgs, EstimateVarArgs, EvalArgs, GtflowArgs, LossArgs, LossParams, PlanefitArgs,
    ReductionArg,
};

fn emit(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string(value).expect("reports serialize"));
}

fn read_stream(path: &Path, width: usize, height: usize) -> CliResult<EventStream> {
    Ok(read_events(&read_text(path)?, width, height)?)
}

fn read_frame(path: &Path) -> CliResult<Frame<f64>> {
    Ok(read_frame_pgm(&read_bytes(path)?)?)
}

fn loss_config(p: &LossParams) -> CliResult<(CharbonnierParams<f64>, LossWeights<f64>)> {
    let params = CharbonnierParams::new(p.alpha, p.epsilon).map_err(|e| CliError::Usage(e.to_string()))?;
    let weights = LossWeights {
        lambda: p.lambda,
        reduction: match p.reduction {
            ReductionArg::Sum => Reduction::Sum,
            ReductionArg::Mean => Reduction::Mean,
        },
    };
    weights.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((params, weights))
}

pub fn encode(a: &EncodeArgs) -> CliResult<()> {
    require_files([a.events.as_path()])?;
    require_output_dirs([Some(a.output.as_path()), a.mask.as_deref()].into_iter().flatten())?;
    if a.t_start >= a.t_end {
        return Err(CliError::Usage("--t-start must be before --t-end".into()));
    }
    let stream = read_stream(&a.events, a.sensor.width, a.sensor.height)?;
    let window = slice_window(&stream, a.t_start, a.t_end)?;
    let image = evflow::encode::<f64>(&window);
    write_bytes(&a.output, &write_event_image(&image))?;
    let mask = event_mask(&window);
    if let Some(path) = &a.mask {
        let frame = Frame::from_fn(mask.width, mask.height, |x, y| if mask.at(x, y) { 1.0f64 } else { 0.0 });
        write_bytes(path, &write_frame_pgm(&frame))?;
    }
    emit(&json!({
        "events": window.events.len(),
        "width": window.width,
        "height": window.height,
        "t_start": window.t_start,
        "t_end": window.t_end,
        "pixels_with_events": mask.count(),
    }));
    Ok(())
}

pub fn loss(a: &LossArgs) -> CliResult<()> {
    require_files([a.frame0.as_path(), a.frame1.as_path()].into_iter().chain(a.flow.as_deref()))?;
    require_output_dirs(a.gradient.as_deref())?;
    let (params, weights) = loss_config(&a.params)?;
    let i0 = read_frame(&a.frame0)?;
    let i1 = read_frame(&a.frame1)?;
    let flow = match &a.flow {
        Some(p) => read_flo(&read_bytes(p)?)?,
        None => FlowField::zeros(i0.width, i0.height),
    };
    let breakdown = total_loss(&i0, &i1, &flow, &params, &weights)?;
    if let Some(path) = &a.gradient {
        let g = loss_gradient(&i0, &i1, &flow, &params, &weights)?;
        write_bytes(path, &write_flo(&g)?)?;
    }
    emit(&breakdown);
    Ok(())
}

pub fn estimate_var(a: &EstimateVarArgs) -> CliResult<()> {
    require_files([a.frame0.as_path(), a.frame1.as_path()])?;
    require_output_dirs([a.output.as_path()])?;
    let (char_params, weights) = loss_config(&a.params)?;
    let opts = SolverOptions {
        levels: a.levels,
        iterations_per_level: a.iterations,
        step_init: a.step_init,
        step_decay: a.step_decay,
        convergence_tol: a.tol,
        char_params,
        weights,
        descent: match a.descent {
            DescentArg::Preconditioned => Descent::Preconditioned,
            DescentArg::Gradient => Descent::Gradient,
        },
    };
    opts.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let i0 = read_frame(&a.frame0)?;
    let i1 = read_frame(&a.frame1)?;
    let (flow, reports) = evflow::estimate_flow(&i0, &i1, &opts)?;
    for r in &reports {
        eprintln!("{}", serde_json::to_string(r).expect("reports serialize"));
    }
    write_bytes(&a.output, &write_flo(&flow)?)?;
    Ok(())
}

pub fn estimate_planefit(a: &PlanefitArgs) -> CliResult<()> {
    require_files([a.events.as_path()])?;
    require_output_dirs([a.output.as_path()])?;
    let opts = PlaneFitOptions {
        spatial_radius: a.radius,
        temporal_window: a.temporal_window,
        vanish_threshold: a.vanish,
        outlier_threshold: a.outlier,
        max_refit_iterations: a.max_refit,
        min_inliers: a.min_inliers,
        same_polarity: a.same_polarity,
    };
    opts.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let stream = read_stream(&a.events, a.sensor.width, a.sensor.height)?;
    let flow = estimate_sparse_flow(&stream, &opts)?;
    let mut csv = String::from("t,x,y,u,v,inliers\n");
    for e in &flow.estimates {
        writeln!(csv, "{},{},{},{:?},{:?},{}", e.t, e.x, e.y, e.u, e.v, e.inlier_count).unwrap();
    }
    write_bytes(&a.output, csv.as_bytes())?;
    emit(&json!({
        "attempted": flow.attempted,
        "valid": flow.estimates.len(),
        "valid_fraction": flow.valid_fraction(),
    }));
    Ok(())
}

pub fn gtflow(a: &GtflowArgs) -> CliResult<()> {
    require_files([a.poses.as_path(), a.camera.as_path()].into_iter().chain(a.depth.iter().map(|p| p.as_path())))?;
    require_output_dirs([a.output.as_path()])?;
    if a.t0 >= a.t1 {
        return Err(CliError::Usage("--t0 must be before --t1".into()));
    }
    let trajectory = read_trajectory::<f64>(&read_text(&a.poses)?)?;
    let camera = read_camera(&read_text(&a.camera)?)?;
    let maps = a.depth.iter().map(|p| Ok(read_depth::<f64>(&read_bytes(p)?)?)).collect::<CliResult<Vec<_>>>()?;
    let depth = select_depth(&maps, a.t0, a.depth_tolerance)?;
    let options = GtFlowOptions {
        convention: match a.convention {
            ConventionArg::Standard => Convention::Standard,
            ConventionArg::NegatedX => Convention::NegatedX,
        },
        smooth_half_width: a.smooth_halfwidth,
        depth_tolerance: a.depth_tolerance,
    };
    let request = GtFlowRequest { t0: a.t0, t1: a.t1, trajectory: &trajectory, depth, camera: &camera };
    let flow = evflow::generate_gt_flow(&request, &options)?;
    write_bytes(&a.output, &write_flo(&flow)?)?;
    let vel = interval_velocity(&trajectory, a.t0, a.t1, a.smooth_halfwidth)?;
    emit(&json!({
        "valid_pixels": flow.valid.iter().filter(|v| **v).count(),
        "depth_timestamp": depth.timestamp,
        "v": vel.v.0,
        "omega": vel.omega.0,
    }));
    Ok(())
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    require_files([a.pred.as_path(), a.gt.as_path()].into_iter().chain(a.events.as_deref()))?;
    let pred: FlowField<f64> = read_flo(&read_bytes(&a.pred)?)?;
    let gt: FlowField<f64> = read_flo(&read_bytes(&a.gt)?)?;
    let (w, h) = gt.dims();
    let mut mask = match &a.events {
        Some(path) => {
            let stream = read_stream(path, w, h)?;
            let t_start = a.t_start.unwrap_or(0);
            let t_end = match a.t_end {
                Some(t) => t,
                None => stream.events.last().map_or(t_start + 1, |e| e.t + 1).max(t_start + 1),
            };
            if t_start >= t_end {
                return Err(CliError::Usage("--t-start must be before --t-end".into()));
            }
            event_mask(&slice_window(&stream, t_start, t_end)?)
        }
        None => Mask::new(w, h, true),
    };
    if a.border > 0 {
        mask = mask.without_border(a.border);
    }
    emit(&evflow::evaluate(&pred, &gt, Some(&mask))?);
    Ok(())
}
