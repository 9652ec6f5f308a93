//! Command-line front end. Exit codes: 0 success, 1 usage, 2 domain error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::{DVector, Vector3};

use crate::harness::{run_tracking, write_outputs, Scenario};
use crate::ik::{mid_range_seed, solve_ik, DlsParams, IkStatus};
use crate::kinematics::{forward_kinematics, sample_workspace_points, summarize_workspace, write_point_cloud_csv};
use crate::liegroup::{euler_from_rotation, exp_so3, RigidTransform};
use crate::metrics::{evaluate, fmt9, metrics_csv, parse_trajectory_csv};
use crate::planner::{goal_from_pose, joint_rows_csv, plan_detailed, time_parameterize, FreeSpace, PlannerParams};
use crate::pose::{estimate_pose, load_frame, PoseParams};
use crate::robot_model::{resolve_model, RobotModel};

#[derive(Debug, Parser)]
#[command(name = "servokin", version, about = "Kinematics, planning and visual-servoing tools")]
struct Cli {
    /// Read joint angles and rotation vectors in radians instead of degrees.
    #[arg(long, global = true)]
    radians: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Forward kinematics: end-effector pose for a joint vector.
    Fk {
        /// `iiwa14` or a model file.
        model: String,
        /// Joint values, space or comma separated.
        #[arg(allow_negative_numbers = true, num_args = 0..)]
        q: Vec<String>,
    },
    /// Damped least squares inverse kinematics.
    Ik {
        model: String,
        /// `x,y,z,rx,ry,rz`: meters and a rotation vector.
        #[arg(long, allow_hyphen_values = true)]
        target: String,
        /// Initial joint vector; defaults to mid-range.
        #[arg(long, allow_hyphen_values = true)]
        seed_config: Option<String>,
        /// Retry from perturbed seeds on local minima with this RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
    },
    /// RRT* joint-space plan from a start configuration to a joint or pose goal.
    Plan {
        model: String,
        #[arg(long, allow_hyphen_values = true)]
        start: String,
        /// Joint vector (one value per joint) or pose `x,y,z,rx,ry,rz`.
        #[arg(long, allow_hyphen_values = true)]
        goal: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
        /// Steering step, radians.
        #[arg(long, default_value_t = 0.2)]
        steer: f64,
        /// Resample at this period (s) instead of printing waypoints.
        #[arg(long)]
        dt: Option<f64>,
        /// Joint-space speed for resampling, rad/s.
        #[arg(long, default_value_t = 0.5)]
        speed: f64,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo workspace reach and volume.
    Workspace {
        model: String,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Voxel edge, millimeters.
        #[arg(long, default_value_t = 20.0)]
        voxel: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the sampled point cloud as CSV.
        #[arg(long)]
        cloud: Option<PathBuf>,
    },
    /// Estimate the object pose from a frame file.
    Pose {
        frame: PathBuf,
        /// RANSAC seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a closed-loop tracking scenario.
    Track {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare an achieved trajectory CSV with a reference.
    Metrics {
        trajectory: PathBuf,
        #[arg(long)]
        desired: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<String, Failure>;

/// Run the CLI on `args` (including the program name), writing results to
/// standard output and diagnostics to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(Failure(msg)) => {
            eprintln!("error: {}", msg.lines().next().unwrap_or_default());
            2
        }
    }
}

fn numbers(text: &str) -> Result<Vec<f64>, Failure> {
    text.split([',', ' '])
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|_| Failure(format!("not a number: {s}"))))
        .collect()
}

fn angle(cli: &Cli, v: f64) -> f64 {
    if cli.radians {
        v
    } else {
        v.to_radians()
    }
}

fn joints(cli: &Cli, model: &RobotModel, text: &str) -> Result<DVector<f64>, Failure> {
    let v = numbers(text)?;
    if v.len() != model.dof() {
        return Err(Failure(format!("expected {} joint values, got {}", model.dof(), v.len())));
    }
    Ok(DVector::from_iterator(v.len(), v.into_iter().map(|x| angle(cli, x))))
}

fn pose_from(cli: &Cli, v: &[f64]) -> Result<RigidTransform, Failure> {
    if v.len() != 6 {
        return Err(Failure(format!("a pose needs 6 values, got {}", v.len())));
    }
    let rv = Vector3::new(angle(cli, v[3]), angle(cli, v[4]), angle(cli, v[5]));
    Ok(RigidTransform::new(exp_so3(&rv), Vector3::new(v[0], v[1], v[2])))
}

fn row(label: &str, values: impl IntoIterator<Item = f64>) -> String {
    let cells: Vec<String> = values.into_iter().map(fmt9).collect();
    format!("{label} {}\n", cells.join(" "))
}

fn describe_pose(t: &RigidTransform) -> String {
    let e = euler_from_rotation(&t.rotation);
    let mut s = row("translation_m", t.translation.iter().copied());
    s += &row("rotation", t.rotation.transpose().iter().copied());
    s += &row("euler_rad", [e.roll, e.pitch, e.yaw]);
    s
}

fn execute(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Fk { model, q } => {
            let model = resolve_model(model)?;
            let q = joints(cli, &model, &q.join(","))?;
            Ok(describe_pose(&forward_kinematics(&model, &q)?))
        }
        Command::Ik {
            model,
            target,
            seed_config,
            seed,
            max_iters,
        } => {
            let model = resolve_model(model)?;
            let target = pose_from(cli, &numbers(target)?)?;
            let start = match seed_config {
                Some(s) => joints(cli, &model, s)?,
                None => mid_range_seed(&model),
            };
            let params = DlsParams {
                max_iterations: *max_iters,
                max_time: None,
                restart_on_local_minimum: seed.is_some(),
                restart_seed: seed.unwrap_or(0),
                ..DlsParams::default()
            };
            let out = solve_ik(&model, &target, &start, &params)?;
            let mut s = format!("status {:?}\niterations {}\nrestarts {}\n", out.status, out.iterations, out.restarts);
            s += &row("q_rad", out.q.iter().copied());
            s += &row("error", out.error.0.iter().copied());
            s += &describe_pose(&forward_kinematics(&model, &out.q)?);
            if out.status != IkStatus::Converged {
                print!("{s}");
                return Err(Failure(format!("inverse kinematics did not converge: {:?}", out.status)));
            }
            Ok(s)
        }
        Command::Plan {
            model,
            start,
            goal,
            seed,
            iterations,
            steer,
            dt,
            speed,
            out,
        } => {
            let model = resolve_model(model)?;
            let start = joints(cli, &model, start)?;
            let g = numbers(goal)?;
            let goal = if g.len() == model.dof() {
                joints(cli, &model, goal)?
            } else if g.len() == 6 {
                let ik = DlsParams {
                    max_time: None,
                    restart_on_local_minimum: true,
                    restart_seed: *seed,
                    ..DlsParams::default()
                };
                goal_from_pose(&model, &pose_from(cli, &g)?, &start, &ik)?
            } else {
                return Err(Failure(format!(
                    "goal needs {} joint values or 6 pose values, got {}",
                    model.dof(),
                    g.len()
                )));
            };
            let params = PlannerParams {
                max_iterations: *iterations,
                steer_step: *steer,
                seed: *seed,
                ..PlannerParams::default()
            };
            let report = plan_detailed(&model, &start, &goal, &params, &FreeSpace)?;
            let csv = match dt {
                Some(dt) => joint_rows_csv(&time_parameterize(&report.path, *dt, *speed)?.rows),
                None => joint_rows_csv(&report.path.waypoints),
            };
            emit(out.as_deref(), csv, format!("path_cost {}\n", fmt9(report.path.cost())))
        }
        Command::Workspace {
            model,
            samples,
            voxel,
            seed,
            cloud,
        } => {
            let model = resolve_model(model)?;
            if *samples == 0 || !(*voxel > 0.0) {
                return Err(Failure("samples and voxel must be positive".into()));
            }
            let points = sample_workspace_points(&model, *samples, *seed);
            if let Some(path) = cloud {
                write_point_cloud_csv(&points, std::io::BufWriter::new(fs::File::create(path)?))?;
            }
            let report = summarize_workspace(&points, voxel / 1000.0, *seed);
            Ok(serde_json::to_string_pretty(&report)? + "\n")
        }
        Command::Pose { frame, seed } => {
            let frame = load_frame(frame)?;
            let mut params = PoseParams::default();
            params.ransac.seed = *seed;
            let est = estimate_pose(&frame, &params);
            let s = serde_json::to_string_pretty(&est)? + "\n";
            if !est.valid {
                print!("{s}");
                return Err(Failure(format!(
                    "pose estimate invalid: {}",
                    est.debug.failure.unwrap_or_default()
                )));
            }
            Ok(s)
        }
        Command::Track { scenario, out, seed } => {
            let text = fs::read_to_string(scenario).map_err(|e| Failure(format!("{}: {e}", scenario.display())))?;
            let mut sc = Scenario::from_json(&text)?;
            if let Some(s) = seed {
                sc.seed = *s;
            }
            sc.model = model_relative_to(&sc.model, scenario);
            let report = run_tracking(&sc)?;
            let files = write_outputs(&report, out)?;
            let mut s = format!(
                "ticks {}\napproach_ticks {}\ntracking_valid_fraction {}\n",
                report.ticks,
                report.approach.end_tick,
                fmt9(report.summary.tracking_valid_fraction)
            );
            if let Some(m) = &report.metrics {
                s += &row("rmse_axes_m", m.rmse_axes_m);
            }
            for f in files {
                s += &format!("wrote {}\n", f.display());
            }
            Ok(s)
        }
        Command::Metrics {
            trajectory,
            desired,
            out,
        } => {
            let read = |p: &Path| fs::read_to_string(p).map_err(|e| Failure(format!("{}: {e}", p.display())));
            let (actual, joints) = parse_trajectory_csv(&read(trajectory)?)?;
            let (reference, _) = parse_trajectory_csv(&read(desired)?)?;
            let report = evaluate(&actual, &reference, joints.as_deref())?;
            emit(out.as_deref(), metrics_csv(&report), String::new())
        }
    }
}

/// Model references that are relative paths resolve against the scenario
/// file's directory when the file exists there.
fn model_relative_to(model: &str, scenario: &Path) -> String {
    let p = Path::new(model);
    if p.is_relative() && !p.exists() {
        if let Some(candidate) = scenario.parent().map(|d| d.join(p)).filter(|c| c.exists()) {
            return candidate.to_string_lossy().into_owned();
        }
    }
    model.to_string()
}

fn emit(path: Option<&Path>, body: String, note: String) -> Outcome {
    match path {
        Some(p) => {
            fs::write(p, body)?;
            Ok(format!("{note}wrote {}\n", p.display()))
        }
        None => Ok(body),
    }
}
