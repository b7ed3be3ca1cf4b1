use std::collections::HashMap;

use regolith_core::geom::{SeededStream, Vec3};
use regolith_core::procgen::{
    build_tool_mesh, check_tool_mesh, generate_terrain, generate_tool, heldout_set, mesh_to_sdf, ray_triangle,
    sample_tool_spec, tool_spec_from_seed, Crater, HeldoutOrigin, TerrainParams, ToolSpec, TriMesh,
    RESERVED_TOOL_SEEDS, TOOL_PARAMS, TOOL_SDF_VOXEL, TRAINING_TOOL_SEEDS,
};

fn random_spec(seed: u64) -> ToolSpec {
    sample_tool_spec(&mut SeededStream::new(seed))
}

/// Incremental convex hull volume; an independent oracle for cavity depth.
fn hull_volume(points: &[Vec3]) -> f64 {
    let far = |from: &dyn Fn(&Vec3) -> f64| {
        (0..points.len())
            .max_by(|&a, &b| from(&points[a]).total_cmp(&from(&points[b])))
            .unwrap()
    };
    let i0 = far(&|p| -p.x);
    let i1 = far(&|p| (p - points[i0]).norm());
    let d01 = (points[i1] - points[i0]).normalize();
    let i2 = far(&|p| (p - points[i0]).cross(&d01).norm());
    let n012 = (points[i1] - points[i0]).cross(&(points[i2] - points[i0])).normalize();
    let i3 = far(&|p| (p - points[i0]).dot(&n012).abs());
    let interior = (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;
    let scale = points.iter().fold(0.0f64, |m, p| m.max(p.norm())).max(1e-9);
    let eps = 1e-9 * scale;

    let mut faces: Vec<[usize; 3]> = Vec::new();
    let add = |faces: &mut Vec<[usize; 3]>, a: usize, b: usize, c: usize| {
        let n = (points[b] - points[a]).cross(&(points[c] - points[a]));
        if n.dot(&(points[a] - interior)) < 0.0 {
            faces.push([a, c, b]);
        } else {
            faces.push([a, b, c]);
        }
    };
    for f in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
        add(&mut faces, f[0], f[1], f[2]);
    }
    // extreme points first keeps later insertions well conditioned
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| (points[b] - interior).norm().total_cmp(&(points[a] - interior).norm()));
    for pi in order {
        let p = points[pi];
        let height = |f: &[usize; 3]| {
            let n = (points[f[1]] - points[f[0]]).cross(&(points[f[2]] - points[f[0]]));
            n.dot(&(p - points[f[0]])) / n.norm()
        };
        let Some(start) = (0..faces.len())
            .filter(|&i| height(&faces[i]) > eps)
            .max_by(|&a, &b| height(&faces[a]).total_cmp(&height(&faces[b])))
        else {
            continue;
        };
        // visible region grown from the most visible face across shared edges
        let mut owner = HashMap::new();
        for (i, f) in faces.iter().enumerate() {
            for k in 0..3 {
                owner.insert((f[k], f[(k + 1) % 3]), i);
            }
        }
        let mut visible = vec![false; faces.len()];
        visible[start] = true;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let f = faces[i];
            for k in 0..3 {
                let j = owner[&(f[(k + 1) % 3], f[k])];
                if !visible[j] && height(&faces[j]) > eps {
                    visible[j] = true;
                    stack.push(j);
                }
            }
        }
        let mut horizon = Vec::new();
        for (f, _) in faces.iter().zip(&visible).filter(|(_, &v)| v) {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if !visible[owner[&(b, a)]] {
                    horizon.push((a, b));
                }
            }
        }
        let mut next: Vec<[usize; 3]> = faces
            .iter()
            .zip(&visible)
            .filter(|(_, &v)| !v)
            .map(|(f, _)| *f)
            .collect();
        next.extend(horizon.into_iter().map(|(a, b)| [a, b, pi]));
        faces = next;
    }
    faces
        .iter()
        .map(|f| (points[f[0]] - interior).dot(&(points[f[1]] - interior).cross(&(points[f[2]] - interior))) / 6.0)
        .sum()
}

/// Support points along fixed directions. Their hull lies inside the full
/// hull, so it bounds the hull volume from below.
fn extreme_vertices(points: &[Vec3], dirs: &[Vec3]) -> Vec<Vec3> {
    let mut picked: Vec<usize> = dirs
        .iter()
        .map(|d| (0..points.len()).max_by(|&a, &b| points[a].dot(d).total_cmp(&points[b].dot(d))).unwrap())
        .collect();
    picked.sort_unstable();
    picked.dedup();
    picked.into_iter().map(|i| points[i]).collect()
}

#[test]
fn hull_oracle_recovers_a_box() {
    let mut pts = Vec::new();
    let mut rng = SeededStream::new(1);
    for i in 0..8 {
        pts.push(Vec3::new(
            if i & 1 == 0 { 0.0 } else { 2.0 },
            if i & 2 == 0 { 0.0 } else { 1.0 },
            if i & 4 == 0 { 0.0 } else { 0.5 },
        ));
    }
    for _ in 0..200 {
        pts.push(Vec3::new(rng.uniform(0.0, 2.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 0.5)));
    }
    assert!((hull_volume(&pts) - 1.0).abs() < 1e-12);
}

#[test]
fn sampling_is_deterministic_and_in_range() {
    assert_eq!(random_spec(11), random_spec(11));
    assert_ne!(random_spec(11), random_spec(12));
    let mut rng = SeededStream::new(2024);
    for _ in 0..1000 {
        let s = sample_tool_spec(&mut rng);
        s.validate().unwrap();
        for ((name, v), info) in s.values().into_iter().zip(TOOL_PARAMS) {
            assert!(v >= info.lo && v <= info.hi, "{name} = {v}");
        }
    }
}

#[test]
fn sample_means_match_declared_distributions() {
    let n = 1000;
    let mut rng = SeededStream::new(99);
    let mut sums = vec![0.0; TOOL_PARAMS.len()];
    for _ in 0..n {
        for (k, (_, v)) in sample_tool_spec(&mut rng).values().into_iter().enumerate() {
            sums[k] += v;
        }
    }
    for (info, sum) in TOOL_PARAMS.iter().zip(sums) {
        let mean = sum / n as f64;
        let tol = 3.0 * info.std_dev() / (n as f64).sqrt();
        assert!(
            (mean - info.mean()).abs() <= tol,
            "{}: mean {mean} vs {} ± {tol}",
            info.name,
            info.mean()
        );
    }
}

#[test]
fn five_hundred_random_tools_are_closed_concave_shells() {
    let mut rng = SeededStream::new(77);
    let dirs: Vec<Vec3> = (0..512)
        .map(|_| Vec3::new(rng.normal(0.0, 1.0), rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)))
        .collect();
    for seed in 0..500 {
        let spec = random_spec(seed);
        let mesh = build_tool_mesh(&spec).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        check_tool_mesh(&mesh).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert_eq!(mesh.euler_characteristic(), 2, "seed {seed}");
        assert!(mesh.min_triangle_area() >= 1e-10, "seed {seed}");
        let (lo, hi) = mesh.bounding_box();
        assert!((hi - lo).max() <= 0.5, "seed {seed}");

        let vol = mesh.volume();
        assert!(vol > 0.0, "seed {seed}");
        let hull = hull_volume(&extreme_vertices(&mesh.vertices, &dirs));
        assert!(hull >= 1.2 * vol, "seed {seed}: hull {hull} vs volume {vol}");

        let mp = mesh.mass_properties(2700.0);
        assert!(mp.mass > 0.0);
        let eig = mp.inertia.symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&e| e > 0.0), "seed {seed}: {eig:?}");
    }
}

#[test]
fn same_spec_gives_byte_identical_mesh() {
    let spec = random_spec(5);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    build_tool_mesh(&spec).unwrap().write_obj(&mut a).unwrap();
    build_tool_mesh(&spec).unwrap().write_obj(&mut b).unwrap();
    assert_eq!(a, b);
}

fn x_extent(mesh: &TriMesh) -> f64 {
    let (lo, hi) = mesh.bounding_box();
    hi.x - lo.x
}

#[test]
fn doubling_width_doubles_the_x_extent() {
    let mut specs = vec![ToolSpec {
        width: 0.11,
        ..ToolSpec::default()
    }];
    for seed in 0..20 {
        let mut s = random_spec(1000 + seed);
        s.width = 0.10 + 0.02 * (seed as f64 / 20.0);
        s.mount_tilt_yaw = 0.0;
        s.mount_tilt_pitch = 0.0;
        s.mount_tilt_roll = 0.0;
        specs.push(s);
    }
    for s in specs {
        let wide = ToolSpec {
            width: 2.0 * s.width,
            ..s.clone()
        };
        let ratio = x_extent(&build_tool_mesh(&wide).unwrap()) / x_extent(&build_tool_mesh(&s).unwrap());
        assert!((ratio - 2.0).abs() <= 0.1, "ratio {ratio} for {s:?}");
    }
}

/// Farthest reach along the lip direction of slices x = const through the mesh.
fn edge_profile(spec: &ToolSpec) -> Vec<f64> {
    let mesh = build_tool_mesh(spec).unwrap();
    let dir = Vec3::new(0.0, -spec.lip_angle.sin(), spec.lip_angle.cos());
    // central 80% of the width: the floor span carrying the teeth, clear of
    // the outer wall faces
    let half = 0.4 * spec.width;
    let n = 3000;
    let mut profile = Vec::new();
    for k in 0..=n {
        let xs = -half + 2.0 * half * k as f64 / n as f64;
        let mut best = f64::NEG_INFINITY;
        for f in 0..mesh.faces.len() {
            let tri = mesh.triangle(f);
            for i in 0..3 {
                let (a, b) = (tri[i], tri[(i + 1) % 3]);
                if (a.x - xs) * (b.x - xs) <= 0.0 && a.x != b.x {
                    let t = (xs - a.x) / (b.x - a.x);
                    best = best.max((a + (b - a) * t).dot(&dir));
                }
            }
        }
        if best.is_finite() {
            profile.push(best);
        }
    }
    profile
}

/// Runs of equal values strictly above both neighboring runs.
fn count_local_maxima(profile: &[f64]) -> usize {
    let mut runs: Vec<f64> = Vec::new();
    for &v in profile {
        if runs.last().is_none_or(|&l| (l - v).abs() > 1e-9) {
            runs.push(v);
        }
    }
    (1..runs.len().saturating_sub(1))
        .filter(|&i| runs[i] > runs[i - 1] && runs[i] > runs[i + 1])
        .count()
}

#[test]
fn teeth_count_sets_edge_profile_maxima() {
    // with a level lip every column tip lies in one plane of constant z
    let base = ToolSpec {
        lip_angle: 0.0,
        lip_length: 0.04,
        tooth_length: 0.015,
        ..ToolSpec::default()
    };
    let flat = edge_profile(&ToolSpec {
        teeth_count: 0,
        ..base.clone()
    });
    assert_eq!(count_local_maxima(&flat), 0);
    let spread = flat.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - flat.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1e-9, "edge without teeth is not flat: {spread}");

    for k in 1..=9 {
        let s = ToolSpec {
            teeth_count: k,
            tooth_spacing_jitter: 0.2,
            seed: 3,
            ..base.clone()
        };
        assert_eq!(count_local_maxima(&edge_profile(&s)), k as usize, "teeth {k}");
    }
}

#[test]
fn deterioration_never_adds_material() {
    for seed in 0..60 {
        let mut s = random_spec(7000 + seed);
        let mut prev = f64::INFINITY;
        for step in 0..=5 {
            s.deterioration = step as f64 / 5.0;
            let v = build_tool_mesh(&s).unwrap().volume();
            assert!(v <= prev, "seed {seed}: volume rose to {v} from {prev} at {}", s.deterioration);
            prev = v;
        }
    }
}

fn cube(half: f64) -> TriMesh {
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -half } else { half },
                if i & 2 == 0 { -half } else { half },
                if i & 4 == 0 { -half } else { half },
            )
        })
        .collect();
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    TriMesh {
        vertices,
        faces: quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect(),
    }
}

#[test]
fn unit_cube_sdf_matches_analytic_distances() {
    let voxel = 0.02;
    let g = mesh_to_sdf(&cube(0.5), voxel).unwrap();
    let (d, _) = g.sample(&Vec3::zeros()).unwrap();
    assert!((d + 0.5).abs() <= 1.5 * voxel, "center {d}");

    // coarser grid so that the 2-voxel margin reaches 0.1 m past the face
    let voxel = 0.06;
    let g = mesh_to_sdf(&cube(0.5), voxel).unwrap();
    for p in [Vec3::new(0.6, 0.1, -0.2), Vec3::new(-0.1, -0.6, 0.3), Vec3::new(0.0, 0.2, 0.6)] {
        let (d, _) = g.sample(&p).unwrap();
        assert!((d - 0.1).abs() <= 1.5 * voxel, "{p:?}: {d}");
    }
}

fn crossings(mesh: &TriMesh, o: &Vec3, d: &Vec3) -> usize {
    (0..mesh.faces.len())
        .filter(|&f| ray_triangle(o, d, &mesh.triangle(f)).is_some())
        .count()
}

#[test]
fn sdf_sign_agrees_with_ray_parity_and_vanishes_on_the_surface() {
    let spec = ToolSpec {
        teeth_count: 3,
        ..ToolSpec::default()
    };
    let asset = generate_tool(&spec).unwrap();
    let g = &asset.sdf;
    let mesh = &asset.mesh;
    let mut rng = SeededStream::new(8);
    let mut inside = 0;
    for _ in 0..1000 {
        let (ix, iy, iz) = (
            rng.index(g.dims[0] as u64) as usize,
            rng.index(g.dims[1] as u64) as usize,
            rng.index(g.dims[2] as u64) as usize,
        );
        let p = g.node(ix, iy, iz);
        let stored = g.values[(iz * g.dims[1] + iy) * g.dims[0] + ix];
        if stored == 0.0 {
            // node lies on a face; parity is undefined there
            continue;
        }
        let d = Vec3::new(rng.normal(0.0, 1.0), rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)).normalize();
        let odd = crossings(mesh, &p, &d) % 2 == 1;
        assert_eq!(stored < 0.0, odd, "node {ix},{iy},{iz} value {stored}");
        inside += odd as usize;
    }
    assert!(inside > 0);

    for _ in 0..100 {
        let f = rng.index(mesh.faces.len() as u64) as usize;
        let [a, b, c] = mesh.triangle(f);
        let (mut u, mut v) = (rng.unit(), rng.unit());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let p = a + (b - a) * u + (c - a) * v;
        let (d, _) = g.sample(&p).unwrap();
        assert!(d.abs() < 1.5 * TOOL_SDF_VOXEL, "surface point SDF {d}");
    }
}

#[test]
fn terrain_is_seeded_bounded_and_carvable() {
    let params = TerrainParams::default();
    let a = generate_terrain(&mut SeededStream::new(21), &params).unwrap();
    let b = generate_terrain(&mut SeededStream::new(21), &params).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), generate_terrain(&mut SeededStream::new(22), &params).unwrap().hash());

    for seed in 0..50 {
        for amp in [0.002, 0.01, 0.05] {
            let p = TerrainParams {
                amplitude: amp,
                max_craters: 5,
                crater_depth: [0.5, 0.5],
                ..TerrainParams::default()
            };
            let t = generate_terrain(&mut SeededStream::new(seed), &p).unwrap();
            assert!(t.max_abs_height() <= amp, "max |h| {} > {amp}", t.max_abs_height());
            assert!(t.craters.len() <= 5);
        }
    }

    let plain = TerrainParams {
        max_craters: 0,
        ..TerrainParams::default()
    };
    let base = generate_terrain(&mut SeededStream::new(5), &plain).unwrap();
    let depth = 0.5 * plain.amplitude;
    let crater = Crater {
        center: [0.6, -0.05],
        radius: 0.08,
        depth,
    };
    let mut carved = base.clone();
    carved.add_crater(crater);
    let min_within = |t: &regolith_core::procgen::TerrainField| {
        let hf = &t.heightfield;
        let mut m = f64::INFINITY;
        for iy in 0..hf.ny {
            for ix in 0..hf.nx {
                let x = hf.origin[0] + ix as f64 * hf.spacing;
                let y = hf.origin[1] + iy as f64 * hf.spacing;
                if (x - crater.center[0]).hypot(y - crater.center[1]) < crater.radius {
                    m = m.min(hf.heights[iy * hf.nx + ix]);
                }
            }
        }
        m
    };
    assert!(min_within(&base) - min_within(&carved) >= 0.5 * depth);
}

#[test]
fn heldout_set_is_four_reserved_plus_four_manual() {
    let set = heldout_set();
    assert_eq!(set.len(), 8);
    let reserved: Vec<u64> = set
        .iter()
        .filter_map(|t| match t.origin {
            HeldoutOrigin::ReservedSeed(s) => Some(s),
            HeldoutOrigin::Manual => None,
        })
        .collect();
    assert_eq!(reserved, RESERVED_TOOL_SEEDS.to_vec());
    assert_eq!(set.iter().filter(|t| t.origin == HeldoutOrigin::Manual).count(), 4);
    for s in RESERVED_TOOL_SEEDS {
        assert!(!TRAINING_TOOL_SEEDS.contains(&s));
    }
    assert_eq!(heldout_set(), set);
    for t in &set {
        if let HeldoutOrigin::ReservedSeed(s) = t.origin {
            assert_eq!(t.spec, tool_spec_from_seed(s));
        }
        let asset = generate_tool(&t.spec).unwrap_or_else(|e| panic!("{}: {e}", t.name));
        assert!(asset.mass > 0.0);
        assert!(asset.inertia.symmetric_eigen().eigenvalues.iter().all(|&e| e > 0.0));
    }
}


proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

    #[test]
    fn any_sampled_spec_round_trips_and_builds(seed in proptest::prelude::any::<u64>()) {
        let spec = random_spec(seed);
        let back = ToolSpec::from_json(&spec.to_json().unwrap()).unwrap();
        proptest::prop_assert_eq!(&back, &spec);
        let mesh = build_tool_mesh(&spec).unwrap();
        proptest::prop_assert!(check_tool_mesh(&mesh).is_ok());
    }
}
