use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use fede_core::checkpoint::Checkpoint;
use fede_core::experiment;
use fede_core::kg::{load_manifest, write_triples, SplitKind};
use fede_core::synth::{generate, SynthConfig};
use fede_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn cpath(p: &Path) -> CString {
    c(p.to_str().unwrap())
}

fn last_error() -> String {
    let p = fede_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

/// Synthetic graph split over three clients plus a tiny federated config.
fn workspace(dir: &Path) -> PathBuf {
    let cfg = SynthConfig {
        triples: 600,
        ..SynthConfig::new(5)
    };
    let (store, vocab) = generate(&cfg).unwrap();
    let triples = dir.join("kg.tsv");
    write_triples(&triples, &store, &vocab).unwrap();

    let mut ds = ptr::null_mut();
    let status = unsafe { fede_dataset_split(cpath(&triples).as_ptr(), 3, 5, cpath(&dir.join("data")).as_ptr(), &mut ds) };
    assert_eq!(status, FedeStatus::Ok);
    let mut n = 0;
    assert_eq!(unsafe { fede_dataset_num_clients(ds, &mut n) }, FedeStatus::Ok);
    assert_eq!(n, 3);
    let mut info = FedeClientInfo::default();
    assert_eq!(unsafe { fede_dataset_client_info(ds, 2, &mut info) }, FedeStatus::Ok);
    assert_eq!(info.relations, 4);
    assert_eq!(unsafe { fede_dataset_client_info(ds, 3, &mut info) }, FedeStatus::InvalidArgument);
    unsafe { fede_dataset_free(ds) };

    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        "setting = \"fed\"\noutput = \"run\"\n[data]\nmanifest = \"data/manifest.tsv\"\n\
         [model]\ndim = 8\nnegatives = 4\ngamma = 4.0\n[optimizer]\nlr = 0.05\n\
         [federation]\nmax_rounds = 4\neval_every = 2\nbatch_size = 64\nlocal_epochs = 1\n",
    )
    .unwrap();
    config
}

#[test]
fn version_and_null_handling() {
    let v = unsafe { CStr::from_ptr(fede_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));

    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { fede_dataset_load(ptr::null(), &mut ds) }, FedeStatus::NullArgument);
    assert!(last_error().contains("manifest"));
    assert!(ds.is_null());
    let missing = c("/nonexistent/manifest.tsv");
    assert_eq!(unsafe { fede_dataset_load(missing.as_ptr(), &mut ds) }, FedeStatus::Io);
    let mut n = 0;
    assert_eq!(unsafe { fede_dataset_num_clients(ptr::null(), &mut n) }, FedeStatus::NullArgument);
    unsafe {
        fede_dataset_free(ptr::null_mut());
        fede_model_free(ptr::null_mut());
        fede_message_free(ptr::null_mut());
        fede_buffer_free(FedeBuffer { data: ptr::null_mut(), len: 0 });
    }
}

#[test]
fn train_score_evaluate_and_persist() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace(dir.path());
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { fede_train(cpath(&config).as_ptr(), false, &mut model) }, FedeStatus::Ok, "{}", last_error());
    assert!(fede_last_error().is_null());

    let (h, r, t) = (c("e0"), c("r0"), c("e1"));
    let mut by_label = 0.0;
    let status = unsafe { fede_model_score_labels(model, 0, h.as_ptr(), r.as_ptr(), t.as_ptr(), &mut by_label) };
    let (dataset, _) = load_manifest(&dir.path().join("data/manifest.tsv")).unwrap();
    let vocab = &dataset.shards[0].vocab;
    match (vocab.entities.id("e0"), vocab.relations.id("r0"), vocab.entities.id("e1")) {
        (Some(hi), Some(ri), Some(ti)) => {
            assert_eq!(status, FedeStatus::Ok);
            let mut by_id = 0.0;
            assert_eq!(unsafe { fede_model_score(model, 0, hi, ri, ti, &mut by_id) }, FedeStatus::Ok);
            assert_eq!(by_id, by_label);
        }
        _ => assert_eq!(status, FedeStatus::UnknownLabel),
    }
    let bogus = c("no-such-entity");
    let status = unsafe { fede_model_score_labels(model, 0, bogus.as_ptr(), r.as_ptr(), t.as_ptr(), &mut by_label) };
    assert_eq!(status, FedeStatus::UnknownLabel);

    let mut per_client = [FedeMetrics::default(); 3];
    let mut avg = FedeMetrics::default();
    let status = unsafe { fede_model_evaluate(model, FEDE_SPLIT_TEST, FEDE_DIRECTIONS_BOTH, 2, per_client.as_mut_ptr(), 3, &mut avg) };
    assert_eq!(status, FedeStatus::Ok);
    let ckpt_path = dir.path().join("run").join(experiment::CHECKPOINT_FILE);
    let ckpt = Checkpoint::load(&ckpt_path, &dataset).unwrap();
    let (expected, expected_avg) =
        experiment::evaluate_checkpoint(&ckpt, &dataset, SplitKind::Test, fede_core::eval::Directions::Both, 1).unwrap();
    for (got, want) in per_client.iter().zip(expected) {
        assert_eq!(*got, FedeMetrics::from(want));
    }
    assert_eq!(avg, FedeMetrics::from(expected_avg));
    let status = unsafe { fede_model_evaluate(model, 9, FEDE_DIRECTIONS_BOTH, 1, ptr::null_mut(), 0, &mut avg) };
    assert_eq!(status, FedeStatus::InvalidArgument);
    let status = unsafe { fede_model_evaluate(model, FEDE_SPLIT_TEST, FEDE_DIRECTIONS_TAIL, 1, per_client.as_mut_ptr(), 2, &mut avg) };
    assert_eq!(status, FedeStatus::InvalidArgument);

    let copy = dir.path().join("copy.ckpt");
    assert_eq!(unsafe { fede_model_save(model, cpath(&copy).as_ptr()) }, FedeStatus::Ok);
    assert_eq!(std::fs::read(&copy).unwrap(), std::fs::read(&ckpt_path).unwrap());
    unsafe { fede_model_free(model) };

    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { fede_model_load(cpath(&copy).as_ptr(), ptr::null(), &mut loaded) }, FedeStatus::Ok);
    let mut again = FedeMetrics::default();
    let status = unsafe { fede_model_evaluate(loaded, FEDE_SPLIT_TEST, FEDE_DIRECTIONS_BOTH, 1, ptr::null_mut(), 0, &mut again) };
    assert_eq!(status, FedeStatus::Ok);
    assert_eq!(again, avg);
    unsafe { fede_model_free(loaded) };

    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let mut m = ptr::null_mut();
    let manifest = cpath(&dir.path().join("data/manifest.tsv"));
    assert_eq!(unsafe { fede_model_load(cpath(&junk).as_ptr(), manifest.as_ptr(), &mut m) }, FedeStatus::Format);
    assert!(m.is_null());

    c_smoke(&ckpt_path);
}

/// Compiles and runs the C smoke program against the generated header and
/// the static library. Skipped when no C compiler is on the path.
fn c_smoke(checkpoint: &Path) {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libfede_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping C smoke test: no cc or {} missing", lib.display());
        return;
    }
    let out = tempfile::tempdir().unwrap();
    let bin = out.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C smoke program failed to compile");
    let run = Command::new(&bin).arg(checkpoint).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("clients 3"));
    assert!(stdout.trim_end().ends_with("ok"));
}

#[test]
fn message_round_trips() {
    let labels = [c("x"), c("y"), c("z")];
    let ptrs: Vec<_> = labels.iter().map(|l| l.as_ptr()).collect();
    let mut msg = ptr::null_mut();
    assert_eq!(unsafe { fede_message_new_register(4, ptrs.as_ptr(), 3, &mut msg) }, FedeStatus::Ok);
    let mut buf = FedeBuffer { data: ptr::null_mut(), len: 0 };
    assert_eq!(unsafe { fede_message_encode(msg, &mut buf) }, FedeStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { fede_message_decode(buf.data, buf.len, &mut back) }, FedeStatus::Ok);
    let mut count = 0;
    assert_eq!(unsafe { fede_message_label_count(back, &mut count) }, FedeStatus::Ok);
    assert_eq!(count, 3);
    let mut label = ptr::null();
    assert_eq!(unsafe { fede_message_label(back, 2, &mut label) }, FedeStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(label) }.to_str().unwrap(), "z");
    assert_eq!(unsafe { fede_message_label(back, 3, &mut label) }, FedeStatus::InvalidArgument);
    let (mut rows, mut dim) = (0, 0);
    assert_eq!(unsafe { fede_message_shape(back, &mut rows, &mut dim) }, FedeStatus::InvalidArgument);
    unsafe {
        fede_buffer_free(buf);
        fede_message_free(msg);
        fede_message_free(back);
    }

    let data = [1.0, -2.5, 0.125, 4.0, 5.5, -6.0];
    let mut msg = ptr::null_mut();
    let status = unsafe { fede_message_new_entities(FEDE_MESSAGE_UPDATE, 9, 2, 3, 2, data.as_ptr(), &mut msg) };
    assert_eq!(status, FedeStatus::Ok);
    let mut buf = FedeBuffer { data: ptr::null_mut(), len: 0 };
    assert_eq!(unsafe { fede_message_encode(msg, &mut buf) }, FedeStatus::Ok);
    let bytes = unsafe { std::slice::from_raw_parts(buf.data, buf.len) }.to_vec();
    assert_eq!(&bytes[..4], b"FEDM");
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { fede_message_decode(bytes.as_ptr(), bytes.len(), &mut back) }, FedeStatus::Ok);
    let (mut kind, mut round, mut client) = (0u8, 0u64, 0u32);
    assert_eq!(unsafe { fede_message_header(back, &mut kind, &mut round, &mut client) }, FedeStatus::Ok);
    assert_eq!((kind, round, client), (FEDE_MESSAGE_UPDATE, 9, 2));
    let (mut rows, mut dim) = (0, 0);
    assert_eq!(unsafe { fede_message_shape(back, &mut rows, &mut dim) }, FedeStatus::Ok);
    assert_eq!((rows, dim), (3, 2));
    let mut out = [0.0; 6];
    assert_eq!(unsafe { fede_message_copy_entities(back, out.as_mut_ptr(), 6) }, FedeStatus::Ok);
    assert_eq!(out, data);
    assert_eq!(unsafe { fede_message_copy_entities(back, out.as_mut_ptr(), 5) }, FedeStatus::InvalidArgument);
    unsafe {
        fede_buffer_free(buf);
        fede_message_free(msg);
        fede_message_free(back);
    }

    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { fede_message_decode(bytes.as_ptr(), 7, &mut bad) }, FedeStatus::Format);
    assert!(bad.is_null());
    let status = unsafe { fede_message_new_entities(FEDE_MESSAGE_REGISTER, 0, 0, 0, 0, ptr::null(), &mut bad) };
    assert_eq!(status, FedeStatus::InvalidArgument);
}
