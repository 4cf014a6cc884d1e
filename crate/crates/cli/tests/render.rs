use std::f64::consts::PI;
use std::fs;

use omsync_cli::render::{
    heat_map_svg, histogram_svg, render_path, tau_curves_svg, HeatScale, Table,
};

fn bar_heights(svg: &str) -> Vec<f64> {
    svg.lines()
        .filter(|l| l.contains(r#"class="bar""#))
        .map(|l| {
            let h = l.split("height=\"").nth(1).unwrap();
            h[..h.find('"').unwrap()].parse().unwrap()
        })
        .collect()
}

#[test]
fn bimodal_histogram_renders_two_peaks() {
    let n = 32;
    let w = 2.0 * PI / n as f64;
    let mut csv = String::from("bin_lo,bin_hi,count,density\n");
    for k in 0..n {
        let c = -PI + (k as f64 + 0.5) * w;
        let d = 0.3 * (-(c * c) / 0.2).exp() + 0.2 * (-((c.abs() - PI).powi(2)) / 0.2).exp() + 0.01;
        csv.push_str(&format!(
            "{},{},{},{d}\n",
            -PI + k as f64 * w,
            -PI + (k + 1) as f64 * w,
            (d * 1000.0) as u64
        ));
    }
    let svg = histogram_svg(&Table::parse(&csv).unwrap(), "h").unwrap();
    let h = bar_heights(&svg);
    assert_eq!(h.len(), n);
    // Local maxima on the circle.
    let peaks = (0..n)
        .filter(|&k| h[k] > h[(k + n - 1) % n] && h[k] >= h[(k + 1) % n])
        .count();
    assert_eq!(peaks, 2);
}

#[test]
fn residence_curves_over_four_points_cross() {
    let csv = "i,quantum_parameter,status,tau0,tau0_stderr,tau_pi,tau_pi_stderr\n\
               0,0.2,ok,800,80,90,9\n1,0.4,ok,300,30,120,12\n2,0.6,ok,150,15,160,16\n3,0.8,ok,90,9,210,21\n";
    let t = Table::parse(csv).unwrap();
    let svg = tau_curves_svg(&t, "tau").unwrap();
    let lines: Vec<Vec<(f64, f64)>> = svg
        .lines()
        .filter(|l| l.contains("<polyline"))
        .map(|l| {
            let p = l.split("points=\"").nth(1).unwrap();
            p[..p.find('"').unwrap()]
                .split(' ')
                .map(|xy| {
                    let (x, y) = xy.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect()
        })
        .collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.len() == 4));
    // SVG y grows downward: τ0 falls (y increases), τπ rises (y decreases).
    assert!(lines[0].windows(2).all(|w| w[1].1 > w[0].1));
    assert!(lines[1].windows(2).all(|w| w[1].1 < w[0].1));
    let above = |k: usize| lines[0][k].1 < lines[1][k].1;
    assert!(above(0) && !above(3));
    assert!(
        svg.contains(">1000<") || svg.contains(">100<"),
        "log-scaled time axis labels"
    );
}

#[test]
fn single_cell_map_renders() {
    let csv = "i,j,coupling_k,quantum_parameter,status,mean_cos,regime\n0,0,0.15,1,ok,0.4,mixed\n";
    let t = Table::parse(csv).unwrap();
    let svg = heat_map_svg(&t, "mean_cos", HeatScale::Correlator, "map").unwrap();
    assert_eq!(svg.matches(r#"class="cell""#).count(), 1);
    let svg = heat_map_svg(&t, "regime", HeatScale::Regime, "map").unwrap();
    assert_eq!(svg.matches(r#"class="cell""#).count(), 1);
}

#[test]
fn missing_or_corrupt_inputs_fail() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(render_path(&tmp.path().join("nope.csv"), tmp.path()).is_err());
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "bin_lo,bin_hi,count,density\n0,1,x,y\n").unwrap();
    assert!(render_path(&bad, tmp.path()).is_err());
    assert!(render_path(tmp.path(), &tmp.path().join("f")).is_err());
}
