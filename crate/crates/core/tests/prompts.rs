use exam_core::gateway::{
    render_grading_prompt, render_qa_prompt, render_question_gen_prompt, render_self_rating_prompt, PromptTemplate,
    Tokenizer, WhitespaceTokenizer,
};
use exam_core::model::{Facet, Query};

fn golden(name: &str) -> String {
    let path = format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

#[test]
fn qa_prompt_matches_golden() {
    let passage = golden("skin_passage.txt");
    let prompt = render_qa_prompt("Outer layer of the skin?", &passage).unwrap();
    assert_eq!(prompt, golden("qa_outer_layer.txt"));
}

#[test]
fn self_rating_prompt_matches_golden() {
    let passage = golden("skin_passage.txt");
    let prompt = render_self_rating_prompt("Outer layer of the skin?", &passage).unwrap();
    assert_eq!(prompt, golden("self_rating_outer_layer.txt"));
}

#[test]
fn question_gen_prompts_match_golden() {
    let query = Query::new("tqa2:L_0384", "The Integumentary System");
    let facet = Facet {
        facet_id: "f1".into(),
        title: "Structure of the Skin".into(),
    };
    let car = render_question_gen_prompt(PromptTemplate::QuestionGenCar, &query, Some(&facet)).unwrap();
    assert_eq!(car, golden("question_gen_car_skin.txt"));

    let dl = render_question_gen_prompt(
        PromptTemplate::QuestionGenDl,
        &Query::new("q", "how do wildfires start"),
        None,
    )
    .unwrap();
    assert_eq!(dl, golden("question_gen_dl_wildfires.txt"));
}

#[test]
fn short_passage_is_not_truncated() {
    let passage = golden("skin_passage.txt");
    let prompt = render_grading_prompt(
        PromptTemplate::Qa,
        "Outer layer of the skin?",
        &passage,
        512,
        &WhitespaceTokenizer,
    )
    .unwrap();
    assert_eq!(prompt, golden("qa_outer_layer.txt"));
}

#[test]
fn long_passage_is_cut_to_budget() {
    let passage = golden("skin_passage.txt").repeat(20);
    let tok = WhitespaceTokenizer;
    for template in [PromptTemplate::Qa, PromptTemplate::SelfRating] {
        let prompt = render_grading_prompt(template, "Outer layer of the skin?", &passage, 512, &tok).unwrap();
        assert!(tok.count(&prompt) <= 512);
        assert!(tok.count(&prompt) >= 500, "budget left unused: {}", tok.count(&prompt));
        assert!(prompt.contains("Question: Outer layer of the skin?\n"));
        let context = prompt.split("Context: ").nth(1).unwrap();
        assert!(passage.starts_with(context));
    }
}
