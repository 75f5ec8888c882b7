//! Keeps `docs/example.mps` equal to what the writer produces.
//! Regenerate with `UPDATE_EXAMPLE=1 cargo test --test mps_example`.

use std::path::PathBuf;

use ptshare_core::milp::{read_mps, solve_milp, write_mps, BbOptions, Model, Sense, Status};

fn example() -> Model {
    // open a station (y) to serve at least 2 units of flow x, with a
    // free slack s tracking the surplus over the minimum
    let mut m = Model::new("station_example");
    let x = m.cont("x", 0.0, 8.0).unwrap();
    let y = m.binary("y", 0).unwrap();
    let s = m.cont("s", f64::NEG_INFINITY, f64::INFINITY).unwrap();
    m.add_objective(x, 3.0);
    m.add_objective(y, 10.0);
    m.obj_offset = -5.0;
    m.add_constraint("demand", &[(x, 1.0)], Sense::Ge, 2.0).unwrap();
    m.add_constraint("open", &[(x, 1.0), (y, -8.0)], Sense::Le, 0.0).unwrap();
    m.add_constraint("surplus", &[(x, 1.0), (s, -1.0)], Sense::Eq, 2.0).unwrap();
    m
}

#[test]
fn example_file_is_current() {
    let text = write_mps(&example()).unwrap();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/example.mps");
    if std::env::var_os("UPDATE_EXAMPLE").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let on_disk = std::fs::read_to_string(&path).unwrap();
    assert_eq!(on_disk, text);

    let back = read_mps(&on_disk).unwrap();
    let sol = solve_milp(&back, &BbOptions::default(), &[], None);
    assert_eq!(sol.status, Status::Optimal);
    // x = 2, y = 1: 6 + 10 - 5
    assert!((sol.objective - 11.0).abs() < 1e-6, "{}", sol.objective);
}
