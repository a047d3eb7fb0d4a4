//! Trajectory CSV: `t,q1..qn,v1..vn,qhat1..qhatn,vhat1..vhatn,u1..um,err_norm,scaled_err_norm,domain_flag`.
//!
//! Floats are written with Rust's `{:?}` formatting, the shortest decimal
//! that parses back to the same `f64`, so a load reproduces the record
//! bit-for-bit.

use std::io::{Read, Write};
use std::path::Path;

use obslab_core::{ObserverState, PlantState, Trajectory};

use crate::CliError;

pub fn header(n: usize, m: usize) -> Vec<String> {
    let seq = |p: &'static str, k: usize| (1..=k).map(move |i| format!("{p}{i}"));
    std::iter::once("t".to_string())
        .chain(seq("q", n))
        .chain(seq("v", n))
        .chain(seq("qhat", n))
        .chain(seq("vhat", n))
        .chain(seq("u", m))
        .chain(["err_norm", "scaled_err_norm", "domain_flag"].map(String::from))
        .collect()
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

pub fn write<W: Write>(traj: &Trajectory<f64>, n: usize, m: usize, out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(n, m)).map_err(io_err)?;
    let mut row: Vec<String> = Vec::with_capacity(4 * n + m + 4);
    for k in 0..traj.len() {
        row.clear();
        row.extend(traj.state_row(k).iter().map(|x| format!("{x:?}")));
        row.push(format!("{:?}", traj.error_norms[k]));
        row.push(format!("{:?}", traj.scaled_error_norms[k]));
        row.push(if traj.domain_violation_flags[k] { "1" } else { "0" }.into());
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn write_file(traj: &Trajectory<f64>, n: usize, m: usize, path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(format!("{}: {e}", path.display())))?;
    write(traj, n, m, std::io::BufWriter::new(file))
}

/// Parses a trajectory CSV, inferring `n` and `m` from the header.
pub fn read<R: Read>(input: R) -> Result<(Trajectory<f64>, usize, usize), CliError> {
    let mut r = csv::Reader::from_reader(input);
    let head: Vec<String> = r.headers().map_err(io_err)?.iter().map(String::from).collect();
    let count = |prefix: &str| {
        head.iter()
            .filter(|h| h.strip_prefix(prefix).is_some_and(|rest| rest.parse::<usize>().is_ok()))
            .count()
    };
    let (n, m) = (count("q"), count("u"));
    if head != header(n, m) {
        return Err(io_err(format!("unexpected trajectory header: {}", head.join(","))));
    }
    let mut traj = Trajectory::default();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(io_err)?;
        let nums: Vec<f64> = rec
            .iter()
            .take(4 * n + m + 3)
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| io_err(format!("row {}: {e}", line + 1)))?;
        let flag = match rec.get(4 * n + m + 3) {
            Some("0") => false,
            Some("1") => true,
            other => return Err(io_err(format!("row {}: bad domain_flag {other:?}", line + 1))),
        };
        let slice = |k: usize, len: usize| nums[k..k + len].to_vec();
        traj.times.push(nums[0]);
        traj.plant_states.push(PlantState {
            q: slice(1, n),
            v: slice(1 + n, n),
        });
        traj.observer_states.push(ObserverState {
            q_hat: slice(1 + 2 * n, n),
            v_hat: slice(1 + 3 * n, n),
        });
        traj.inputs.push(slice(1 + 4 * n, m));
        traj.error_norms.push(nums[1 + 4 * n + m]);
        traj.scaled_error_norms.push(nums[2 + 4 * n + m]);
        traj.domain_violation_flags.push(flag);
    }
    Ok((traj, n, m))
}

pub fn read_file(path: &Path) -> Result<(Trajectory<f64>, usize, usize), CliError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(format!("{}: {e}", path.display())))?;
    read(std::io::BufReader::new(file))
}

/// Gnuplot script plotting raw and scaled error norms (log scale) and each
/// joint's true and estimated velocity from `csv_name`.
pub fn gnuplot_script(csv_name: &str, n: usize, m: usize) -> String {
    let col = |name: &str| header(n, m).iter().position(|h| h == name).map_or(0, |i| i + 1);
    let mut s = String::new();
    s.push_str("# gnuplot script; run from the output directory: gnuplot -p plot.gp\n");
    s.push_str("set datafile separator ','\nset key autotitle columnhead\nset xlabel 't [s]'\n");
    s.push_str(&format!("set multiplot layout {},1\n", n + 1));
    s.push_str("set logscale y\nset ylabel 'error norm'\n");
    s.push_str(&format!(
        "plot '{csv_name}' using 1:{} with lines, '' using 1:{} with lines\n",
        col("err_norm"),
        col("scaled_err_norm")
    ));
    s.push_str("unset logscale y\n");
    for i in 1..=n {
        s.push_str(&format!("set ylabel 'v{i} [rad/s]'\n"));
        s.push_str(&format!(
            "plot '{csv_name}' using 1:{} with lines, '' using 1:{} with lines\n",
            col(&format!("v{i}")),
            col(&format!("vhat{i}"))
        ));
    }
    s.push_str("unset multiplot\n");
    s
}
