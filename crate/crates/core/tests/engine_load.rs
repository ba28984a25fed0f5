use css_core::config::RunConfig;
use css_core::corpus::{Vocabulary, SEP_TOKEN};
use css_core::da_encoder::{DaConfig, DaEncoder};
use css_core::engine::ChatEngine;
use css_core::seq2seq::{Mode, Seq2Seq, Seq2SeqConfig};
use css_core::Error;

fn run() -> RunConfig {
    let mut r = RunConfig::default();
    r.da = DaConfig {
        embed_dim: 4,
        max_len: 8,
        windows: vec![2, 3],
        filters_per_window: 2,
        hidden_dim: 6,
        ..DaConfig::default()
    };
    r.seq2seq = Seq2SeqConfig {
        embed_dim: 4,
        encoder_hidden: 4,
        decoder_hidden: 6,
        context_dim: 6,
        max_in_len: 10,
        max_out_len: 6,
        ..Seq2SeqConfig::default()
    };
    r
}

fn vocab() -> Vocabulary {
    let words = vec![vec!["hello", "there", "how", "are", "you"]];
    Vocabulary::build_with_reserved(words, 20, &[SEP_TOKEN]).unwrap()
}

fn save_gen(dir: &std::path::Path, cfg: Seq2SeqConfig) -> std::path::PathBuf {
    let path = dir.join(format!("{}.ckpt", cfg.mode));
    Seq2Seq::new(cfg, vocab(), 1).unwrap().save(&path).unwrap();
    path
}

#[test]
fn mode_and_window_come_from_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let r = run();
    let gen = save_gen(
        dir.path(),
        Seq2SeqConfig {
            mode: Mode::Baseline2,
            window: 3,
            ..r.seq2seq.clone()
        },
    );
    let engine = ChatEngine::load(&r, &gen, None).unwrap();
    assert_eq!(engine.seq2seq().mode(), Mode::Baseline2);
    assert_eq!(engine.seq2seq().config().window, 3);
}

#[test]
fn other_config_differences_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let r = run();
    let gen = save_gen(
        dir.path(),
        Seq2SeqConfig {
            mode: Mode::Baseline1,
            embed_dim: 5,
            ..r.seq2seq.clone()
        },
    );
    assert!(matches!(
        ChatEngine::load(&r, &gen, None),
        Err(Error::Checkpoint(_))
    ));
}

#[test]
fn css_checkpoint_needs_a_matching_context_model() {
    let dir = tempfile::tempdir().unwrap();
    let r = run();
    let gen = save_gen(dir.path(), r.seq2seq.clone());
    assert!(matches!(
        ChatEngine::load(&r, &gen, None),
        Err(Error::Config(_))
    ));

    let da_path = dir.path().join("da.ckpt");
    DaEncoder::new(r.da.clone(), vocab(), 2)
        .unwrap()
        .save(&da_path)
        .unwrap();
    let engine = ChatEngine::load(&r, &gen, Some(&da_path)).unwrap();
    assert!(engine.da().is_some());

    let mut other = r.clone();
    other.da.filters_per_window = 3;
    assert!(matches!(
        ChatEngine::load(&other, &gen, Some(&da_path)),
        Err(Error::Checkpoint(_))
    ));
}
