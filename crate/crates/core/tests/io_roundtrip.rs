use heatgraph::graphs::WeightMatrix;
use heatgraph::io::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #[test]
    fn dense_csv_round_trip_is_bit_exact(
        rows in 1usize..6,
        cols in 1usize..6,
        values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 36),
    ) {
        let m = DMatrix::from_fn(rows, cols, |i, j| values[i * 6 + j]);
        let mut buf = Vec::new();
        write_dense_csv_to(&mut buf, &m).unwrap();
        let back = read_dense_csv_from(buf.as_slice()).unwrap();
        prop_assert_eq!(back.shape(), m.shape());
        for (a, b) in back.iter().zip(m.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn edge_list_round_trip(n in 2usize..10, seed in 0u64..1000) {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| (i * 31 + j * 17 + seed as usize).is_multiple_of(3))
            .map(|(i, j)| (i, j, 1.0 / (1.0 + (i + j) as f64 + seed as f64)))
            .collect();
        let g = WeightMatrix::from_edges(n, &edges).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        write_edge_list(&path, &g).unwrap();
        prop_assert_eq!(read_edge_list(&path, n).unwrap(), g);
    }
}

#[test]
fn file_round_trip_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let m = DMatrix::from_row_slice(2, 2, &[1.0, -0.1, 1e-17, 3.5]);
    write_dense_csv(&path, &m).unwrap();
    assert_eq!(read_dense_csv(&path).unwrap(), m);
    let err = read_dense_csv(dir.path().join("absent.csv")).unwrap_err();
    assert!(err.is_io());
}
