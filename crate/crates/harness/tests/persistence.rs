use std::fs;
use std::path::PathBuf;

use pgld::config::{FieldSpec, RunConfig};
use pgld::expr::{Env, Expr};
use pgld::output::{read_control_csv, write_control_csv};
use pgld::snapshot::{decode, encode, read_snapshot, write_snapshot};
use pgld_core::grid::{Grid, ScalarField};
use pgld_core::skeleton::ControlPath;
use proptest::prelude::*;

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn bits(f: &ScalarField) -> Vec<u64> {
    f.data.iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snapshots_round_trip_bitwise(
        nx in 3usize..6, ny in 3usize..6, nz in 3usize..6,
        lx in 0.1f64..10.0, ly in 0.1f64..10.0, h in 0.1f64..10.0,
        raw in prop::collection::vec(any::<u64>().prop_filter("finite", |b| f64::from_bits(*b).is_finite()), 125),
    ) {
        let grid = Grid::new(nx, ny, nz, lx, ly, h).unwrap();
        let data: Vec<f64> = raw.iter().take(grid.len()).map(|b| f64::from_bits(*b)).collect();
        let f = ScalarField { grid, data };
        let back = decode(&encode(&f)).unwrap();
        prop_assert_eq!(back.grid, grid);
        prop_assert_eq!(bits(&back), bits(&f));
    }

    #[test]
    fn expressions_agree_with_direct_evaluation(
        x in -2.0f64..2.0, y in -2.0f64..2.0, z in -1.0f64..0.0, t in 0.0f64..3.0,
    ) {
        let env = Env { x, y, z, t, lx: 2.0, ly: 3.0, h: 0.5 };
        let cases: [(&str, f64); 4] = [
            ("sin(pi * x / lx) * exp(-t) + y^2 - 3 * z / h", (std::f64::consts::PI * x / 2.0).sin() * (-t).exp() + y * y - 3.0 * z / 0.5),
            ("-x^2 + max(y, z) * cosh(t / 2)", -(x * x) + y.max(z) * (t / 2.0).cosh()),
            ("sqrt(abs(x * y) + 1) / (1 + tanh(t)^2)", ((x * y).abs() + 1.0).sqrt() / (1.0 + t.tanh().powi(2))),
            ("ln(2 + cos(x)) - min(1, t) * e", (2.0 + x.cos()).ln() - 1f64.min(t) * std::f64::consts::E),
        ];
        for (src, want) in cases {
            let got = Expr::parse(src).unwrap().eval(&env);
            prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{}: {} vs {}", src, got, want);
        }
    }

    #[test]
    fn controls_round_trip_exactly(
        widths in prop::collection::vec(0.01f64..1.0, 1..8),
        raw in prop::collection::vec(-1e3f64..1e3, 24),
        m in 1usize..4,
    ) {
        let mut knots = vec![0.0];
        for w in &widths {
            knots.push(knots.last().unwrap() + w);
        }
        let values: Vec<Vec<f64>> = (0..widths.len()).map(|p| raw[p * 3..p * 3 + m].to_vec()).collect();
        let q: Vec<f64> = (0..m).map(|j| 1.0 / (1.0 + j as f64)).collect();
        let chi = ControlPath::new(knots, values, q.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_control_csv(&p, &chi).unwrap();
        prop_assert_eq!(read_control_csv(&p, &q).unwrap(), chi);
    }
}

#[test]
fn snapshot_files_and_corruption() {
    let grid = Grid::new(4, 3, 5, 1.0, 2.0, 0.5).unwrap();
    let f = ScalarField::from_fn(grid, |x, y, z| x - 2.0 * y + z.exp());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.bin");
    write_snapshot(&f, &p).unwrap();
    let bytes = fs::read(&p).unwrap();
    assert_eq!(&bytes[..8], b"PGLDFLD0");
    assert_eq!(bytes.len(), 8 + 12 + 24 + 8 * grid.len());
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
    assert_eq!(f64::from_le_bytes(bytes[28..36].try_into().unwrap()), 2.0);
    assert_eq!(f64::from_le_bytes(bytes[44..52].try_into().unwrap()), f.data[0]);
    assert_eq!(bits(&read_snapshot(&p).unwrap()), bits(&f));

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert_eq!(decode(&bad).unwrap_err(), "bad magic");
    assert!(decode(&bytes[..bytes.len() - 1]).unwrap_err().contains("truncated"));
    assert!(decode(&bytes[..20]).unwrap_err().contains("truncated"));
    let mut zero = bytes.clone();
    zero[8..12].copy_from_slice(&0u32.to_le_bytes());
    assert!(decode(&zero).unwrap_err().contains("zero dimension"));
    let mut huge = bytes.clone();
    for k in 0..3 {
        huge[8 + 4 * k..12 + 4 * k].copy_from_slice(&u32::MAX.to_le_bytes());
    }
    assert!(decode(&huge).is_err());
    let mut nan = bytes.clone();
    nan[52..60].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(decode(&nan).unwrap_err().contains("non-finite"));
    let mut long = bytes.clone();
    long.push(0);
    assert!(decode(&long).unwrap_err().contains("trailing"));
    assert!(read_snapshot(&dir.path().join("missing.bin")).is_err());
}

#[test]
fn control_csv_rejects_broken_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.csv");
    let q = [1.0, 0.5];
    let header = "interval,t_start,t_end,mode,value\n";
    for body in [
        "0,0,0.5,0,1\n",                               // mode 1 missing
        "0,0,0.5,0,1\n0,0,0.5,1,2\n1,0.4,1,0,1\n1,0.4,1,1,1\n", // gap between intervals
        "0,0,0.5,0,1\n0,0,0.5,2,2\n",                  // mode out of range
        "0,0,0.5,0,1\n0,0,0.5,1,abc\n",               // not a number
        "1,0,0.5,0,1\n1,0,0.5,1,1\n",                  // starts at interval 1
    ] {
        fs::write(&p, format!("{header}{body}")).unwrap();
        assert!(read_control_csv(&p, &q).is_err(), "{body}");
    }
    fs::write(&p, format!("{header}0,0,0.5,0,1\n0,0,0.5,1,2\n1,0.5,1,0,3\n1,0.5,1,1,4\n")).unwrap();
    let chi = read_control_csv(&p, &q).unwrap();
    assert_eq!(chi.knots, vec![0.0, 0.5, 1.0]);
    assert_eq!(chi.values, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
}

#[test]
fn shipped_configs_round_trip() {
    for name in ["small_box.toml", "linear.toml"] {
        let mut c = RunConfig::load(&shipped(name)).unwrap();
        c.base_dir = None;
        let text = c.to_toml().unwrap();
        let again = RunConfig::from_toml(&text).unwrap();
        assert_eq!(again, c, "{name}");
        assert_eq!(again.to_toml().unwrap(), text);
        c.build_model().unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn edited_configs_round_trip(seed in 0..=i64::MAX as u64, eps in 0.0f64..10.0, steps in 1usize..200, delta in 0.01f64..5.0) {
        let mut c = RunConfig::load(&shipped("linear.toml")).unwrap();
        c.base_dir = None;
        c.master_seed = seed;
        c.eps = eps;
        c.time.dt = c.time.t_final / steps as f64;
        c.experiment.delta = delta;
        c.theta0 = FieldSpec::Expr { expr: format!("{delta} * cos(pi * z)") };
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }
}

fn write_config(dir: &std::path::Path, text: &str) -> PathBuf {
    let p = dir.join("c.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn invalid_configs_are_rejected() {
    let base = fs::read_to_string(shipped("linear.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("dt does not divide T", base.replace("dt = 0.02", "dt = 0.03")),
        ("unknown key", base.replace("eps = 0.1", "eps = 0.1\nepsilon = 2")),
        ("missing file", format!("{base}\n[theta0]\nfile = \"nowhere.bin\"\n")),
        ("bad expression", base.replace("[time]", "[theta0]\nexpr = \"sin(x\"\n\n[time]")),
        ("unknown variable", base.replace("[time]", "[theta0]\nexpr = \"w + 1\"\n\n[time]")),
        ("incompatible theta*", base.replace("[noise]", "[forcing]\ntheta_star = { expr = \"x\" }\n\n[noise]")),
        ("time-dependent theta*", base.replace("[noise]", "[forcing]\ntheta_star = { expr = \"t\" }\n\n[noise]")),
        ("too few amplitudes", base.replace("amplitudes = [1.0]", "amplitudes = []")),
        ("direction outside noise", base.replace("direction_mode = 0", "direction_mode = 3")),
        ("negative eps", base.replace("eps = 0.1", "eps = -0.1")),
        ("bad grid", base.replace("nz = 9", "nz = 1")),
        ("seed beyond TOML integers", base.replace("master_seed = 1", "master_seed = 9223372036854775808")),
    ];
    for (what, text) in cases {
        assert_ne!(text, base, "{what}");
        assert!(RunConfig::load(&write_config(dir.path(), &text)).is_err(), "{what}");
    }
    let ok = base.replace("[noise]", "[forcing]\ntheta_star = { expr = \"cos(pi * x / lx) * cos(2 * pi * y / ly)\" }\n\n[noise]");
    assert!(RunConfig::load(&write_config(dir.path(), &ok)).is_ok());
}

#[test]
fn fields_from_files_are_used_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let base = fs::read_to_string(shipped("linear.toml")).unwrap();
    let grid = Grid::new(3, 3, 9, 1.0, 1.0, 1.0).unwrap();
    let theta0 = ScalarField::from_fn(grid, |_, _, z| (3.0 * z).sin());
    write_snapshot(&theta0, &dir.path().join("theta0.bin")).unwrap();
    let text = base.replace("[time]", "[theta0]\nfile = \"theta0.bin\"\n\n[time]");
    let c = RunConfig::load(&write_config(dir.path(), &text)).unwrap();
    assert_eq!(c.input_files(), vec![dir.path().join("theta0.bin")]);
    assert_eq!(bits(&c.build_model().unwrap().theta0), bits(&theta0));

    let other = ScalarField::zeros(Grid::new(3, 3, 5, 1.0, 1.0, 1.0).unwrap());
    write_snapshot(&other, &dir.path().join("theta0.bin")).unwrap();
    let c = RunConfig::load(&write_config(dir.path(), &text)).unwrap();
    assert!(c.build_model().is_err());
}
