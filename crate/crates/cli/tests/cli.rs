use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use dashpc_core::ply::{read_ply_file, write_ply_file};
use dashpc_core::{PlyEncoding, Point, PointCloud};
use dashpc_net::SessionLog;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dashpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dashpc"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn cloud(seed: u64, n: usize) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new(
        (0..n)
            .map(|_| {
                Point::new(
                    rng.gen_range(0.0..100.0),
                    rng.gen_range(0.0..100.0),
                    rng.gen_range(0.0..100.0),
                    rng.gen(),
                    rng.gen(),
                    rng.gen(),
                )
            })
            .collect(),
    )
    .unwrap()
}

fn write_frames(dir: &Path, count: usize, n: usize) -> Vec<PathBuf> {
    (0..count)
        .map(|i| {
            let p = dir.join(format!("f_{i:03}.ply"));
            write_ply_file(&p, &cloud(i as u64, n), PlyEncoding::BinaryLittleEndian).unwrap();
            p
        })
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn subsample_keeps_ceiling_of_percentage() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ply");
    write_ply_file(&input, &cloud(1, 1001), PlyEncoding::Ascii).unwrap();
    let out = dir.path().join("half.ply");
    for method in ["alg1", "alg2", "alg3"] {
        let o = dashpc(&[
            "subsample",
            s(&input),
            "--percentage",
            "50",
            "--method",
            method,
            "--out",
            s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("points_in=1001 points_out=501"));
        assert_eq!(read_ply_file(&out).unwrap().len(), 501);
    }
    let o = dashpc(&[
        "subsample",
        s(&input),
        "--percentage",
        "100",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(read_ply_file(&out).unwrap().len(), 1001);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ply");
    write_ply_file(&input, &cloud(1, 10), PlyEncoding::Ascii).unwrap();
    let out = dir.path().join("o.ply");
    let cases: &[&[&str]] = &[
        &["subsample", s(&input), "--out", s(&out)],
        &[
            "subsample",
            s(&input),
            "--ratio",
            "2",
            "--percentage",
            "50",
            "--out",
            s(&out),
        ],
        &["subsample", s(&input), "--ratio", "0.5", "--out", s(&out)],
        &[
            "subsample",
            s(&input),
            "--percentage",
            "150",
            "--out",
            s(&out),
        ],
        &[
            "subsample",
            s(&input),
            "--ratio",
            "2",
            "--method",
            "alg9",
            "--out",
            s(&out),
        ],
        &[
            "subsample",
            "--seq",
            "nopattern.ply:0:2",
            "--ratio",
            "2",
            "--out",
            s(&out),
        ],
        &["optimize", s(&input), "--distance", "-1", "--out", s(&out)],
        &["serve", "--root", ".", "--throttle", "warp speed"],
        &["frobnicate"],
    ];
    for args in cases {
        let o = dashpc(args);
        assert_eq!(
            code(&o),
            2,
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn bad_input_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("bad.ply");
    fs::write(&garbage, "ply\nformat nonsense\n").unwrap();
    let out = dir.path().join("o.ply");
    for input in [garbage.as_path(), &dir.path().join("absent.ply")] {
        let o = dashpc(&["subsample", s(input), "--ratio", "2", "--out", s(&out)]);
        assert_eq!(code(&o), 3);
        let err = String::from_utf8(o.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with("dashpc: "));
    }
    assert_eq!(code(&dashpc(&["info", s(&garbage)])), 3);
}

#[test]
fn sequence_mode_matches_single_runs() {
    let dir = tempfile::tempdir().unwrap();
    let frames = write_frames(dir.path(), 4, 700);
    let pattern = format!("{}/f_%03d.ply:0:4", dir.path().display());
    let seq_out = dir.path().join("seq");
    let o = dashpc(&[
        "subsample",
        "--seq",
        &pattern,
        "--ratio",
        "3",
        "--method",
        "alg3",
        "--out",
        s(&seq_out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("files=4 points_in=2800 points_out=936"));
    for f in &frames {
        let single = dir.path().join("single.ply");
        assert_eq!(
            code(&dashpc(&[
                "subsample",
                s(f),
                "--ratio",
                "3",
                "--method",
                "alg3",
                "--out",
                s(&single)
            ])),
            0
        );
        let name = f.file_name().unwrap();
        assert_eq!(
            fs::read(seq_out.join(name)).unwrap(),
            fs::read(&single).unwrap()
        );
    }

    // A gap in the sequence is reported before anything is written.
    fs::remove_file(&frames[2]).unwrap();
    let fresh = dir.path().join("fresh");
    let o = dashpc(&[
        "scale",
        "--seq",
        &pattern,
        "--percentage",
        "50",
        "--out",
        s(&fresh),
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("f_002.ply"));
    assert!(!fresh.exists());
}

#[test]
fn scale_by_percentage() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ply");
    let c = cloud(3, 200);
    write_ply_file(&input, &c, PlyEncoding::BinaryLittleEndian).unwrap();
    let out = dir.path().join("o.ply");
    assert_eq!(
        code(&dashpc(&[
            "scale",
            s(&input),
            "--percentage",
            "100",
            "--out",
            s(&out)
        ])),
        0
    );
    assert_eq!(fs::read(&out).unwrap(), fs::read(&input).unwrap());
    assert_eq!(
        code(&dashpc(&[
            "scale",
            s(&input),
            "--percentage",
            "200",
            "--out",
            s(&out)
        ])),
        0
    );
    let d = read_ply_file(&out).unwrap().bbox().unwrap().diagonal();
    let d0 = c.bbox().unwrap().diagonal();
    assert!((d / d0 - 2.0).abs() < 1e-6, "{d} vs {d0}");
}

#[test]
fn optimize_follows_viewing_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ply");
    write_ply_file(&input, &cloud(4, 20_000), PlyEncoding::BinaryLittleEndian).unwrap();
    let run = |d: &str, dp: &str, sc: &str, name: &str| {
        let out = dir.path().join(name);
        let o = dashpc(&[
            "optimize",
            s(&input),
            "--distance",
            d,
            "--camera-distance",
            dp,
            "--scale",
            sc,
            "--units-per-inch",
            "1000",
            "--out",
            s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (read_ply_file(&out).unwrap().len(), fs::read(&out).unwrap())
    };
    let near = run("1", "0", "1", "near.ply");
    let mid = run("20", "20", "1", "mid.ply");
    let far = run("20", "200", "1", "far.ply");
    assert_eq!(near.0, 20_000);
    assert!(mid.0 > far.0 && far.0 >= 1, "{} {}", mid.0, far.0);
    let doubled = run("40", "40", "2", "doubled.ply");
    assert_eq!(doubled.1, mid.1);
}

#[test]
fn package_psnr_and_info() {
    let dir = tempfile::tempdir().unwrap();
    let frames = write_frames(dir.path(), 2, 500);
    let pkg = dir.path().join("pkg");
    let o = dashpc(&[
        "package",
        s(&frames[0]),
        s(&frames[1]),
        "--ratios",
        "1,2",
        "--out",
        s(&pkg),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("frames=2 representations=2 segments=4"));
    let media: Vec<_> = walk(&pkg)
        .into_iter()
        .filter(|p| p.extension().unwrap() == "ply")
        .collect();
    assert_eq!(media.len(), 4);
    assert!(pkg.join("manifest.mpd").is_file());
    // Not strictly decreasing.
    assert_eq!(
        code(&dashpc(&[
            "package",
            s(&frames[0]),
            "--ratios",
            "2,1",
            "--out",
            s(&pkg)
        ])),
        2
    );

    let o = dashpc(&["psnr", s(&frames[0]), s(&frames[0])]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("psnr_db=inf"));
    let o = dashpc(&[
        "psnr",
        s(&frames[0]),
        s(&pkg.join("frame_0/rep_2.ply")),
        "--json",
    ]);
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["record"], "psnr");
    assert!(v["psnr_db"].as_f64().unwrap() > 0.0);

    let o = dashpc(&["info", s(&frames[0])]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(
        out.contains("encoding=binary_little_endian vertices=500 properties=x,y,z,red,green,blue"),
        "{out}"
    );
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn serve_and_stream_on_loopback() {
    let dir = tempfile::tempdir().unwrap();
    let frames = write_frames(dir.path(), 5, 400);
    let pkg = dir.path().join("pkg");
    let mut args = vec!["package".to_string()];
    args.extend(frames.iter().map(|f| s(f).to_string()));
    args.extend(["--ratios", "1,2,4", "--out", s(&pkg)].map(String::from));
    assert_eq!(
        code(&dashpc(
            &args.iter().map(String::as_str).collect::<Vec<_>>()
        )),
        0
    );

    let access = dir.path().join("access.log");
    let mut server = Command::new(env!("CARGO_BIN_EXE_dashpc"))
        .args([
            "serve",
            "--root",
            s(&pkg),
            "--port",
            "0",
            "--log",
            s(&access),
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let base = line.trim().strip_prefix("listening=").unwrap().to_string();

    let log_path = dir.path().join("session.jsonl");
    let o = dashpc(&[
        "stream",
        "--mpd",
        &format!("{base}manifest.mpd"),
        "--distance",
        "1",
        "--fps",
        "50",
        "--log",
        s(&log_path),
    ]);
    server.kill().unwrap();
    server.wait().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("frames=5"));
    let log = SessionLog::from_json_lines(&fs::read_to_string(&log_path).unwrap()).unwrap();
    assert_eq!(log.records.len(), 5);
    assert_eq!(log.header.frame_interval_s, 0.02);
    assert!(fs::read_to_string(&access).unwrap().lines().count() >= 6);

    // Local manifests stream without a server; the log goes to stdout.
    let o = dashpc(&[
        "stream",
        "--mpd",
        s(&pkg.join("manifest.mpd")),
        "--fps",
        "100",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        SessionLog::from_json_lines(&stdout(&o))
            .unwrap()
            .records
            .len(),
        5
    );
}

#[test]
fn unreachable_origin_exits_four() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    let o = dashpc(&[
        "stream",
        "--mpd",
        &format!("http://127.0.0.1:{port}/manifest.mpd"),
    ]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));

    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    assert_eq!(code(&dashpc(&["serve", "--root", ".", "--port", &port])), 4);
}
