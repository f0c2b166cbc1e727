use qdtn::letters::{letter_images, LetterCorpusSpec};
use qdtn::transform::image_to_state;

#[test]
fn letter_states_are_pairwise_distinct() {
    let imgs = letter_images(&LetterCorpusSpec::default()).unwrap();
    assert_eq!(imgs.len(), 30);
    for n in [3, 4] {
        let states: Vec<_> = imgs
            .iter()
            .map(|li| image_to_state(&li.image, n).unwrap())
            .collect();
        let mut closest = f64::INFINITY;
        for i in 0..states.len() {
            for j in i + 1..states.len() {
                closest = closest.min(states[i].frobenius_distance(&states[j]));
            }
        }
        assert!(closest > 1e-3, "n={n}: closest pair at {closest}");
    }
}
