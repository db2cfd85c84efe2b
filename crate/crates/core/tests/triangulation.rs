use multicake::geometry::{CakeConfig, Division};
use multicake::triangulation::{
    assign_owners, predicted_cell_count, predicted_vertex_count, Triangulation,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn configs(max_cakes: usize, max_pieces: usize) -> Vec<CakeConfig> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(cur: &mut Vec<usize>, max_cakes: usize, max_pieces: usize, out: &mut Vec<CakeConfig>) {
        if !cur.is_empty() {
            out.push(CakeConfig::new(cur.clone()).unwrap());
        }
        if cur.len() == max_cakes {
            return;
        }
        let lo = cur.last().copied().unwrap_or(2);
        for k in lo..=max_pieces {
            cur.push(k);
            rec(cur, max_cakes, max_pieces, out);
            cur.pop();
        }
    }
    rec(&mut cur, max_cakes, max_pieces, &mut out);
    out
}

/// Counts integer vectors of length `k` summing to `n` by direct recursion.
fn brute_compositions(n: u32, k: usize) -> u128 {
    if k == 1 {
        return 1;
    }
    (0..=n)
        .map(|first| brute_compositions(n - first, k - 1))
        .sum()
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// Lattice volume of the polytope: product of dilated simplex volumes.
fn polytope_volume(config: &CakeConfig, mesh: u32) -> f64 {
    config
        .pieces_per_cake()
        .iter()
        .map(|&k| (mesh as f64).powi(k as i32 - 1) / factorial(k - 1) as f64)
        .product()
}

/// Free coordinates of a vertex: every piece except the first of each cake.
fn free_coords(tri: &Triangulation, v: usize) -> Vec<f64> {
    tri.vertex_coords(v)
        .iter()
        .flat_map(|row| row[1..].iter().map(|&y| y as f64))
        .collect()
}

fn cell_volume(tri: &Triangulation, ids: &[usize]) -> f64 {
    let d = tri.dimension();
    let origin = free_coords(tri, ids[0]);
    let mut m = DMatrix::zeros(d, d);
    for (c, &v) in ids[1..].iter().enumerate() {
        for (r, (x, o)) in free_coords(tri, v).iter().zip(&origin).enumerate() {
            m[(r, c)] = x - o;
        }
    }
    m.determinant().abs() / factorial(d) as f64
}

#[test]
fn vertex_count_matches_brute_enumeration() {
    for config in configs(3, 4) {
        for mesh in 1..=4 {
            let brute: u128 = config
                .pieces_per_cake()
                .iter()
                .map(|&k| brute_compositions(mesh, k))
                .product();
            assert_eq!(
                predicted_vertex_count(&config, mesh),
                brute,
                "{config} N={mesh}"
            );
            if brute < 5_000 {
                let tri = Triangulation::build(&config, mesh).unwrap();
                assert_eq!(tri.vertex_count() as u128, brute);
            }
        }
    }
}

#[test]
fn enumerated_cells_match_formula() {
    for config in configs(3, 4).into_iter().filter(|c| c.dimension() <= 5) {
        for mesh in 1..=3 {
            let d = config.dimension();
            let formula = (mesh as u128).pow(d as u32) * factorial(d)
                / config
                    .pieces_per_cake()
                    .iter()
                    .map(|&k| factorial(k - 1))
                    .product::<u128>();
            let tri = Triangulation::build(&config, mesh).unwrap();
            let mut counted = 0u128;
            tri.for_each_cell(|_, ids, _| {
                assert_eq!(ids.len(), d + 1);
                counted += 1;
            });
            assert_eq!(counted, formula, "{config} N={mesh}");
            assert_eq!(predicted_cell_count(&config, mesh), formula);
            assert_eq!(tri.cell_count() as u128, formula);
        }
    }
}

#[test]
fn cell_volumes_sum_to_polytope_volume() {
    for config in configs(3, 4).into_iter().filter(|c| c.dimension() <= 3) {
        for mesh in 1..=4 {
            let tri = Triangulation::build(&config, mesh).unwrap();
            let unit = 1.0 / factorial(tri.dimension()) as f64;
            let mut total = 0.0;
            tri.for_each_cell(|_, ids, _| {
                let v = cell_volume(&tri, ids);
                assert!((v - unit).abs() < 1e-9, "cell is not unimodular: {v}");
                total += v;
            });
            let expected = polytope_volume(&config, mesh);
            assert!(
                (total - expected).abs() < 1e-9,
                "{config} N={mesh}: {total} vs {expected}"
            );
        }
    }
}

#[test]
fn cell_interiors_are_disjoint() {
    // the centroid of each cell lies strictly inside that cell and no other
    for config in configs(3, 4).into_iter().filter(|c| c.dimension() <= 3) {
        for mesh in 1..=4 {
            let tri = Triangulation::build(&config, mesh).unwrap();
            for cell in tri.cells() {
                let divisions: Vec<Division> = cell
                    .vertex_ids
                    .iter()
                    .map(|&v| tri.vertex_division(v))
                    .collect();
                let w = 1.0 / divisions.len() as f64;
                let parts: Vec<(f64, &Division)> = divisions.iter().map(|d| (w, d)).collect();
                let centroid = Division::combine(&parts);
                let inside = tri.containing_cells(&centroid, -1e-9);
                assert_eq!(inside.len(), 1, "{config} N={mesh} cell {}", cell.index);
                assert_eq!(inside[0].0.index, cell.index);
            }
        }
    }
}

#[test]
fn shared_vertices_of_neighbouring_cells_form_common_faces() {
    // two cells meeting in a set of vertices must not overlap beyond the hull
    // of those vertices: the shared face centroid lies in no cell interior
    for config in [vec![2, 2], vec![2, 3], vec![4], vec![2, 2, 2]] {
        let config = CakeConfig::new(config).unwrap();
        let tri = Triangulation::build(&config, 3).unwrap();
        let cells: Vec<_> = tri.cells().collect();
        for a in &cells {
            for b in &cells {
                if a.index >= b.index {
                    continue;
                }
                let shared: Vec<usize> = a
                    .vertex_ids
                    .iter()
                    .copied()
                    .filter(|v| b.vertex_ids.contains(v))
                    .collect();
                if shared.is_empty() {
                    continue;
                }
                let divisions: Vec<Division> =
                    shared.iter().map(|&v| tri.vertex_division(v)).collect();
                let w = 1.0 / divisions.len() as f64;
                let parts: Vec<(f64, &Division)> = divisions.iter().map(|d| (w, d)).collect();
                let point = Division::combine(&parts);
                for (cell, bary) in tri.containing_cells(&point, 1e-9) {
                    // every cell containing the face point has the face's
                    // vertices with all remaining weight zero
                    for (t, &v) in cell.vertex_ids.iter().enumerate() {
                        if !shared.contains(&v) {
                            assert!(
                                bary[t].abs() < 1e-9,
                                "{config}: cells {} {} overlap",
                                a.index,
                                b.index
                            );
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn owners_are_uniform_on_every_cell() {
    for config in configs(3, 4).into_iter().filter(|c| c.dimension() <= 5) {
        for mesh in 1..=3 {
            let tri = Triangulation::build(&config, mesh).unwrap();
            for players in 2..=4 {
                let owners = assign_owners(&tri, players).unwrap();
                tri.for_each_cell(|index, ids, _| {
                    assert!(
                        owners.is_uniform_on(ids),
                        "{config} N={mesh} p={players} cell {index}"
                    );
                });
            }
        }
    }
}

#[test]
fn owners_depend_only_on_coordinates() {
    let config = CakeConfig::new(vec![2, 3]).unwrap();
    let tri = Triangulation::build(&config, 4).unwrap();
    for players in 2..=4 {
        let owners = assign_owners(&tri, players).unwrap();
        for v in 0..tri.vertex_count() {
            let weighted: u64 = tri
                .vertex_coords(v)
                .iter()
                .flat_map(|row| row.iter().enumerate().map(|(j, &y)| j as u64 * y as u64))
                .sum();
            assert_eq!(owners.owner(v), (weighted % players as u64) as usize);
        }
    }
}

fn arb_point() -> impl Strategy<Value = (Vec<usize>, u32, Vec<Vec<f64>>)> {
    (prop::collection::vec(2usize..=4, 1..=3), 1u32..=4)
        .prop_filter("small enough to scan", |(pieces, mesh)| {
            predicted_cell_count(&CakeConfig::new(pieces.clone()).unwrap(), *mesh) <= 100_000
        })
        .prop_flat_map(|(pieces, mesh)| {
            let rows: Vec<_> = pieces
                .iter()
                .map(|&k| prop::collection::vec(0.0f64..1.0, k))
                .collect();
            (Just(pieces), Just(mesh), rows)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn every_point_lies_in_a_cell((pieces, mesh, raw) in arb_point()) {
        let config = CakeConfig::new(pieces).unwrap();
        let rows: Vec<Vec<f64>> = raw
            .iter()
            .map(|r| {
                let s: f64 = r.iter().sum::<f64>() + 1e-9;
                let mut row: Vec<f64> = r.iter().map(|x| x / s).collect();
                let fix = 1.0 - row.iter().sum::<f64>();
                row[0] += fix;
                row
            })
            .collect();
        let point = Division::new(&config, rows).unwrap();
        let tri = Triangulation::build(&config, mesh).unwrap();
        let found = tri.containing_cells(&point, 1e-9);
        prop_assert!(!found.is_empty());
        for (cell, w) in found {
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let divisions: Vec<Division> = cell.vertex_ids.iter().map(|&v| tri.vertex_division(v)).collect();
            let parts: Vec<(f64, &Division)> = w.iter().copied().zip(divisions.iter()).collect();
            prop_assert!(Division::combine(&parts).approx_eq(&point, 1e-9));
        }
    }
}
