// Sizing probe for the sparse solvers on quadratic-FEM-like patterns.
use emwave::model::{Vec3, C64};
use emwave::sparsela::{gmres, Factorization, SolveOptions, SparseMatrix};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let (nx, ny, nz): (i64, i64, i64) = if args.len() > 3 {
        (args[1].parse().unwrap(), args[2].parse().unwrap(), args[3].parse().unwrap())
    } else {
        (33, 25, 25)
    };
    let nodes = (nx * ny * nz) as usize;
    let n = nodes * 4;
    let idx = |i: i64, j: i64, k: i64| -> i64 { (i * ny + j) * nz + k };
    let mut trips: Vec<(u32, u32, C64)> = Vec::new();
    let mut coords: Vec<Vec3> = Vec::with_capacity(n);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                for _s in 0..4 {
                    coords.push([i as f64, j as f64, k as f64]);
                }
                let a = idx(i, j, k);
                for di in -2i64..=2 {
                    for dj in -2i64..=2 {
                        for dk in -2i64..=2 {
                            if di.abs() + dj.abs() + dk.abs() > 4 {
                                continue;
                            }
                            let (ii, jj, kk) = (i + di, j + dj, k + dk);
                            if ii < 0 || jj < 0 || kk < 0 || ii >= nx || jj >= ny || kk >= nz {
                                continue;
                            }
                            let b = idx(ii, jj, kk);
                            for sa in 0..4usize {
                                for sb in 0..4usize {
                                    if sa != sb && (di != 0 || dj != 0 || dk != 0) && (sa + sb) % 2 == 0 {
                                        continue;
                                    }
                                    let row = a as usize * 4 + sa;
                                    let col = b as usize * 4 + sb;
                                    let v = if row == col {
                                        C64::new(200.0, 20.0)
                                    } else {
                                        C64::new(-1.0 / (1.0 + (di * di + dj * dj + dk * dk) as f64), 0.1)
                                    };
                                    trips.push((row as u32, col as u32, v));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    println!("n = {n}, triplets = {} ({:.1}/row)", trips.len(), trips.len() as f64 / n as f64);
    let t1 = std::time::Instant::now();
    let mat = SparseMatrix::from_triplets(n, &trips).unwrap();
    drop(trips);
    println!("csr assembled in {:.1}s, nnz = {}", t1.elapsed().as_secs_f64(), mat.nnz());
    let b: Vec<C64> = (0..n).map(|i| C64::new(1.0 + (i % 3) as f64, -0.5)).collect();

    let mut opts = SolveOptions::default();
    if std::env::var("EMWAVE_BENCH_RCM").is_err() { opts.coords = Some(coords); }
    let t2 = std::time::Instant::now();
    match Factorization::new(&mat, &opts) {
        Ok(f) => {
            println!(
                "LU factored in {:.1}s, factor nnz = {} ({:.2} GB)",
                t2.elapsed().as_secs_f64(),
                f.factor_nnz(),
                f.factor_nnz() as f64 * 20.0 / 1e9
            );
            let t3 = std::time::Instant::now();
            let (_, rep) = f.solve(&b).unwrap();
            println!("solve in {:.2}s, residual {:.2e}", t3.elapsed().as_secs_f64(), rep.residual_norm_relative);
        }
        Err(e) => println!("direct failed: {e}"),
    }

    let t4 = std::time::Instant::now();
    match gmres(&mat, &b, &opts) {
        Ok((_, rep)) => println!(
            "gmres in {:.1}s, {} iters, residual {:.2e}",
            t4.elapsed().as_secs_f64(),
            rep.iterations,
            rep.residual_norm_relative
        ),
        Err(e) => println!("gmres failed: {e}"),
    }
}
// (appended) quick ordering comparison via env var EMWAVE_BENCH_RCM=1
