use lieval_core::attack::gan::{gan_reconstruct, train_gan_attack, GanConfig, GanError};
use lieval_core::cipher::pixelwise::{encrypt_pixelwise, PixelwiseKey};
use lieval_core::image::{split_halves, Dataset, Role};
use lieval_core::nn::checkpoint::load_network;
use lieval_core::synth::synthetic_dataset;

fn halves() -> (Dataset, Dataset, Dataset) {
    let train = synthetic_dataset(32, 16, 3, 0, Role::Train).unwrap();
    let test = synthetic_dataset(4, 16, 4, 32, Role::Test).unwrap();
    let key = PixelwiseKey::new(5, 6, 7, 8);
    let (t1, t2) = split_halves(&train, 1).unwrap();
    let e1 = t1.map_images(|_, img| encrypt_pixelwise(img, &key)).unwrap();
    let eq = test.map_images(|_, img| encrypt_pixelwise(img, &key)).unwrap();
    (e1, t2, eq)
}

fn quick(seed: u64) -> GanConfig {
    GanConfig {
        epochs: 3,
        batch: 8,
        seed,
        ..Default::default()
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let (e1, t2, eq) = halves();
    let a = train_gan_attack::<f64>(&e1, &t2, &quick(4)).unwrap();
    let b = train_gan_attack::<f64>(&e1, &t2, &quick(4)).unwrap();
    let c = train_gan_attack::<f64>(&e1, &t2, &quick(5)).unwrap();
    assert_eq!(a.history_csv(), b.history_csv());
    assert_eq!(a.generator_checkpoint(), b.generator_checkpoint());
    assert_ne!(a.generator_checkpoint(), c.generator_checkpoint());
    assert_eq!(gan_reconstruct(&a, &eq).unwrap().images(), gan_reconstruct(&b, &eq).unwrap().images());
}

#[test]
fn history_is_complete_and_bounded() {
    let (e1, t2, _) = halves();
    let m = train_gan_attack::<f64>(&e1, &t2, &quick(0)).unwrap();
    assert_eq!(m.history.len(), 3);
    for s in &m.history {
        assert!(s.d_loss.is_finite() && s.g_loss.is_finite());
        assert!((0.0..=1.0).contains(&s.d_real_mean) && (0.0..=1.0).contains(&s.d_fake_mean));
    }
    let csv = m.history_csv();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn generator_checkpoint_reloads() {
    let (e1, t2, eq) = halves();
    let m = train_gan_attack::<f64>(&e1, &t2, &quick(2)).unwrap();
    let g = load_network::<f64>(&m.generator_checkpoint()).unwrap();
    assert_eq!(g.specs(), m.generator.specs());
    let direct = lieval_core::attack::gan::generate(&g, eq.images()).unwrap();
    assert_eq!(direct, gan_reconstruct(&m, &eq).unwrap().images());
}

#[test]
fn shared_images_between_halves_are_refused() {
    let (e1, _, _) = halves();
    let plain_with_overlap = synthetic_dataset(16, 16, 3, 0, Role::Train).unwrap();
    assert!(matches!(
        train_gan_attack::<f64>(&e1, &plain_with_overlap, &quick(0)),
        Err(GanError::DisjointnessViolation(_))
    ));
}

#[test]
fn f32_training_runs() {
    let (e1, t2, eq) = halves();
    let m = train_gan_attack::<f32>(&e1, &t2, &quick(0)).unwrap();
    assert_eq!(gan_reconstruct(&m, &eq).unwrap().len(), 4);
}
