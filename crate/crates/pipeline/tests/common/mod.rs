#![allow(dead_code)]

use std::path::{Path, PathBuf};

use stance_pipeline::cli;

pub const RADICAL: &str = "radical_right_portal";
pub const MAINSTREAM: &str = "mainstream_group";

const AGAINST: [&str; 4] = [
    "Massiimmigratsioon oleks Euroopale hukatuslik.",
    "Migrandid tuleb Eestist kohe välja saata.",
    "Piirid tuleb sisserände eest sulgeda.",
    "Illegaalsed immigrandid ohustavad meie julgeolekut.",
];
const NEUTRAL: [&str; 4] = [
    "Valitsus arutas täna sisserände kvooti.",
    "Ettevõtte töötajatest on pooled välismaalased.",
    "Pagulaste arv jäi eelmise aastaga samaks.",
    "Ministeerium avaldas rändestatistika.",
];
const SUPPORTIVE: [&str; 4] = [
    "Pagulaste vastuvõtmine on meie kohus ja au.",
    "Migrandid rikastavad meie kultuuri ja majandust.",
    "Elamisloa saamine peaks olema lihtsam ja kiirem.",
    "Sisserändajad aitavad tööjõupuudust leevendada.",
];
const FILLER: [&str; 4] = [
    "Ilm oli täna päikeseline.",
    "Linnud alustasid rännet lõunasse.",
    "Jalgpallikoondis võitis mängu kindlalt.",
    "Hinnad poes tõusid taas.",
];

/// Ten articles per publisher. The mainstream publisher has nothing in
/// November and December 2019, so its series must show empty buckets.
fn dates(publisher: &str) -> [&'static str; 10] {
    if publisher == RADICAL {
        [
            "2019-09-03", "2019-09-20", "2019-10-07", "2019-10-28", "2019-11-11", "2019-11-29", "2019-12-09",
            "2020-01-14", "2020-02-03", "2020-02-26",
        ]
    } else {
        [
            "2019-09-05", "2019-09-17", "2019-09-30", "2019-10-02", "2019-10-21", "2020-01-06", "2020-01-20",
            "2020-01-31", "2020-02-10", "2020-02-24",
        ]
    }
}

fn body(p: usize, i: usize) -> String {
    let k = p * 10 + i;
    fn pick(pool: &[&'static str; 4], k: usize, off: usize) -> &'static str {
        pool[(k + off) % 4]
    }
    let mut parts = vec![pick(&FILLER, k, 0)];
    match k % 3 {
        0 => parts.extend([pick(&AGAINST, k, 0), pick(&NEUTRAL, k, 1)]),
        1 => parts.extend([pick(&NEUTRAL, k, 0), pick(&SUPPORTIVE, k, 2)]),
        _ => parts.extend([pick(&SUPPORTIVE, k, 0), pick(&AGAINST, k, 3)]),
    }
    if k.is_multiple_of(4) {
        parts.push(pick(&FILLER, k, 1));
    }
    parts.join(" ")
}

/// Writes one ingest CSV per publisher and returns their paths.
pub fn write_corpus(dir: &Path) -> Vec<(String, PathBuf)> {
    let mut out = Vec::new();
    for (p, publisher) in [RADICAL, MAINSTREAM].into_iter().enumerate() {
        let path = dir.join(format!("{publisher}.csv"));
        let mut w = csv::Writer::from_path(&path).unwrap();
        w.write_record(["id", "date", "title", "body", "language"]).unwrap();
        for (i, date) in dates(publisher).iter().enumerate() {
            let id = format!("{}{:02}", &publisher[..2], i);
            w.write_record([id.as_str(), date, "Pealkiri", &body(p, i), "et"]).unwrap();
        }
        w.flush().unwrap();
        out.push((publisher.to_string(), path));
    }
    out
}

/// Labeled training sentences covering all three classes.
pub fn write_labels(dir: &Path) -> PathBuf {
    let path = dir.join("labels.csv");
    let mut w = csv::Writer::from_path(&path).unwrap();
    w.write_record(["id", "text", "label"]).unwrap();
    let mut n = 0;
    for (pool, label) in [(AGAINST, "Against"), (NEUTRAL, "Neutral"), (SUPPORTIVE, "Supportive")] {
        for (i, t) in pool.iter().enumerate() {
            for variant in [t.to_string(), format!("Ka täna: {t}")] {
                n += 1;
                w.write_record([format!("g{n}-{i}").as_str(), &variant, label]).unwrap();
            }
        }
    }
    w.flush().unwrap();
    path
}

pub fn run_ok(args: &[&str]) -> String {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(std::iter::once("stance").chain(args.iter().copied()), &mut out, &mut err);
    assert_eq!(code, 0, "stance {args:?} failed: {}", String::from_utf8_lossy(&err));
    String::from_utf8(out).unwrap()
}

/// ingest → extract → train-nb → classify → trends --plot-data into
/// `data`, with fixtures written under `fixtures`.
pub fn smoke_run(fixtures: &Path, data: &Path, seed: u64) {
    let d = data.to_str().unwrap();
    let seed = seed.to_string();
    for (publisher, path) in write_corpus(fixtures) {
        run_ok(&["--data-dir", d, "--seed", &seed, "ingest", "--publisher", &publisher, "--input", path.to_str().unwrap()]);
    }
    let labels = write_labels(fixtures);
    run_ok(&["--data-dir", d, "--seed", &seed, "extract"]);
    run_ok(&["--data-dir", d, "--seed", &seed, "train-nb", "--labels", labels.to_str().unwrap()]);
    run_ok(&["--data-dir", d, "--seed", &seed, "classify", "--backend", "nb"]);
    run_ok(&["--data-dir", d, "--seed", &seed, "trends", "--plot-data"]);
}

/// Every CSV under `series/` and `plot/`, relative path → bytes.
pub fn trend_files(data: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["series", "plot"] {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(data.join(sub))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        paths.sort();
        for p in paths {
            out.push((format!("{sub}/{}", p.file_name().unwrap().to_string_lossy()), std::fs::read(&p).unwrap()));
        }
    }
    out
}
