#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mmprep"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr_json(o: &Output) -> Value {
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.trim().lines().count(), 1, "stderr should be one line: {err}");
    serde_json::from_str(err.trim()).expect("stderr is JSON")
}

/// `key=value` lines as a lookup.
pub fn kv(text: &str, key: &str) -> Option<String> {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')).map(str::to_string))
}

struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        self.0 >> 33
    }

    fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }
}

const WORDS: &[&str] = &[
    "river", "stone", "garden", "light", "market", "window", "bridge", "forest", "coffee", "train", "mountain", "story",
    "pepper", "winter", "harbor", "music", "village", "cloud", "table", "lantern", "orchard", "canvas", "meadow", "signal",
];

fn sentence(rng: &mut Lcg, n: usize) -> String {
    (0..n).map(|_| WORDS[rng.below(WORDS.len() as u64) as usize]).collect::<Vec<_>>().join(" ")
}

fn md5_for(i: u64) -> String {
    format!("{:032x}", 0x1000_0000_0000_0000_u128 + i as u128 * 7919)
}

/// Raw pages plus an image sidecar exercising every corpus rule: banner
/// images repeated across more than ten pages, decorative URLs, tiny and
/// extreme-aspect images, in-page repeats, image-less and image-heavy pages,
/// broken markup and a near-duplicate text page.
pub fn write_corpus_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let mut rng = Lcg(42);
    let mut pages = Vec::new();
    let mut images = Vec::new();
    let img = |url: String, w: u32, h: u32, md5: String, images: &mut Vec<Value>| {
        images.push(json!({"url": url, "width": w, "height": h, "md5": md5}));
        url
    };
    let banner = img("https://cdn.example/banner.jpg".into(), 800, 600, md5_for(999), &mut images);
    let logo = img("https://cdn.example/site-LOGO.png".into(), 300, 300, md5_for(998), &mut images);
    let tiny = img("https://cdn.example/tiny.jpg".into(), 80, 120, md5_for(997), &mut images);
    let wide = img("https://cdn.example/wide.jpg".into(), 2100, 1000, md5_for(996), &mut images);
    images.push(json!({"url": "https://cdn.example/broken.jpg", "width": 0, "height": 0,
        "md5": md5_for(995), "bytes_valid": false}));

    for p in 0..40u64 {
        let mut body = String::new();
        body.push_str(&format!("<h1>{}</h1>", sentence(&mut rng, 4)));
        let n_imgs = 1 + rng.below(3);
        for k in 0..n_imgs {
            let url = img(format!("https://img.example/p{p}/{k}.jpg"), 400 + 10 * k as u32, 300, md5_for(p * 10 + k), &mut images);
            body.push_str(&format!("<p>{}</p><img src=\"{url}\">", sentence(&mut rng, 20)));
        }
        if p < 12 {
            body.push_str(&format!("<img src=\"{banner}\">"));
        }
        match p % 8 {
            0 => body.push_str(&format!("<img src=\"{logo}\">")),
            1 => body.push_str(&format!("<img src=\"{tiny}\"><img src=\"{wide}\">")),
            2 => body.push_str("<img src=\"https://cdn.example/broken.jpg\"><img src=\"https://unknown.example/x.jpg\">"),
            3 => body.push_str(&format!("<img src=\"https://img.example/p{p}/0.jpg\">")),
            _ => {}
        }
        body.push_str(&format!("<div><p>{}</p><script>track({p})</script></div>", sentence(&mut rng, 60)));
        pages.push(json!({"page_id": format!("page-{p:03}"), "url": format!("https://site.example/{p}"),
            "markup": body}));
    }
    pages.push(json!({"page_id": "no-images", "url": "u", "markup": format!("<p>{}</p>", sentence(&mut rng, 80))}));
    let many: String = (0..31)
        .map(|k| {
            let url = img(format!("https://img.example/many/{k}.jpg"), 500, 500, md5_for(5000 + k), &mut images);
            format!("<img src=\"{url}\">")
        })
        .collect();
    pages.push(json!({"page_id": "too-many", "url": "u", "markup": format!("<p>gallery</p>{many}")}));
    pages.push(json!({"page_id": "broken-markup", "url": "u", "markup": "<div><p>oops</div>"}));
    let copy = pages[5]["markup"].as_str().unwrap().replace("</h1>", " again</h1>");
    pages.push(json!({"page_id": "near-copy", "url": "u", "markup": copy}));

    let pages_path = dir.join("pages.jsonl");
    let images_path = dir.join("images.jsonl");
    let lines = |v: &[Value]| v.iter().map(|x| x.to_string() + "\n").collect::<String>();
    fs::write(&pages_path, lines(&pages)).unwrap();
    fs::write(&images_path, lines(&images)).unwrap();
    (pages_path, images_path)
}

/// Single-image caption documents in the interleaved format.
pub fn write_captions_fixture(dir: &Path) -> PathBuf {
    let mut rng = Lcg(7);
    let docs: Vec<Value> = (0..30u64)
        .map(|i| {
            json!({"doc_id": format!("cap-{i}"), "segments": [
                {"type": "image", "url": format!("https://cap.example/{i}.jpg"), "width": 640, "height": 480,
                 "md5": md5_for(20_000 + i)},
                {"type": "text", "content": sentence(&mut rng, 8)},
            ]})
        })
        .collect();
    let path = dir.join("captions.jsonl");
    fs::write(&path, docs.iter().map(|d| d.to_string() + "\n").collect::<String>()).unwrap();
    path
}

/// corpus-build, mixture-snapshot and pack into `dir/{corpus,snapshot,packed}`.
pub fn run_pipeline(dir: &Path, seed: &str) -> [PathBuf; 3] {
    let (pages, images) = write_corpus_fixture(dir);
    let captions = write_captions_fixture(dir);
    let corpus = dir.join("corpus");
    let snap = dir.join("snapshot");
    let packed = dir.join("packed");
    let p = |x: &Path| x.to_str().unwrap().to_string();
    let o = run(&[
        "corpus-build", "--pages", &p(&pages), "--images", &p(&images), "--min-tokens", "40", "--out", &p(&corpus),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&[
        "--seed", seed, "mixture-snapshot",
        "--interleaved", &p(&corpus.join("interleaved.jsonl")),
        "--captions", &p(&captions),
        "--text", &p(&corpus.join("text.jsonl")),
        "--n-entries", "300", "--out", &p(&snap),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&[
        "pack", "--snapshot", &p(&snap.join("snapshot.txt")),
        "--interleaved", &p(&corpus.join("interleaved.jsonl")),
        "--captions", &p(&captions),
        "--text", &p(&corpus.join("text.jsonl")),
        "--seq-len", "256", "--max-images", "4", "--tokens-per-image", "16", "--batch-size", "8",
        "--out", &p(&packed),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    [corpus, snap, packed]
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}
