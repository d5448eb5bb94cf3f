use chrono::{Duration, Utc};
use qaforge_core::corpus::{Document, GenStrategy, Language, Question, ReviewState};
use qaforge_service::Store;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus() -> (Vec<Document>, Vec<Question>) {
    let doc = Document::from_texts(
        "d1",
        Language::en(),
        Language::en(),
        "Augsburg",
        ["One.", "Two.", "Three."],
    );
    let q = Question {
        id: "q1".into(),
        document_id: "d1".into(),
        language: Language::en(),
        original_language: Language::en(),
        text: "Which one?".into(),
        gen_strategy: GenStrategy::FullDocument,
        review_state: ReviewState::Approved,
        edit_history: vec![],
        retranslated_via: None,
    };
    (vec![doc], vec![q])
}

#[test]
fn annotations_survive_reopening() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("annotations.sqlite");
    let now = Utc::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let submitted = {
        let store = Store::open(&path).unwrap();
        let (docs, qs) = corpus();
        store.import(&docs, &qs).unwrap();
        let a = store.create_session("v1", now).unwrap();
        let t = store
            .next_task(&a, "v1", now, Duration::minutes(60), &mut rng)
            .unwrap()
            .unwrap();
        store
            .submit(&a, "v1", &t.assignment_id, [1].into_iter().collect(), false, now)
            .unwrap()
    };
    let store = Store::open(&path).unwrap();
    assert_eq!(store.export().unwrap(), vec![submitted]);
    let counts = store.counts().unwrap();
    assert_eq!((counts.questions, counts.annotations, counts.sessions), (1, 1, 1));

    // importing the same corpus again leaves existing rows alone
    let (docs, qs) = corpus();
    store.import(&docs, &qs).unwrap();
    assert_eq!(store.counts().unwrap().annotations, 1);
}
