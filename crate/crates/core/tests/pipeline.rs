use std::sync::Arc;
use std::time::Duration;

use dual_reflect::backend::{HttpBackend, HttpConfig, RetryPolicy, ScriptedBackend};
use dual_reflect::extraction::JudgmentResult;
use dual_reflect::pipeline::{
    is_valid_stage_order, PipelineError, Recorder, TerminationReason,
};
use dual_reflect::transcript::{canonical_transcript, MemorySink};
use dual_reflect::{run_pipeline, run_zero_shot, Mode, Pipeline, RunConfig, Stage, TranslationTask};

fn task() -> TranslationTask {
    TranslationTask::new("t1", "他们吃了苹果。", "Chinese", "English")
}

fn converge_once() -> ScriptedBackend {
    ScriptedBackend::builder()
        .stage(Stage::Draft, ["They ate apples."])
        .stage(Stage::Back, ["他们吃了苹果。"])
        .stage(Stage::Judge, ["False"])
        .stage(Stage::Extract, [r#"{"final_translation": "They ate apples."}"#])
        .build()
        .unwrap()
}

fn always_continue(rounds: usize) -> ScriptedBackend {
    let revisions: Vec<String> = (1..rounds).map(|i| format!("They ate the apples (v{i}).")).collect();
    ScriptedBackend::builder()
        .stage(Stage::Draft, ["They ate apple."])
        .stage(Stage::Back, vec!["他们吃苹果。"; rounds])
        .stage(Stage::Judge, vec!["True, the tense is lost."; rounds])
        .stage(Stage::Reflect, vec!["Analysis Results: tense.\nTranslation Suggestions: use past."; rounds])
        .stage(Stage::Revise, revisions)
        .stage(Stage::Extract, ["{'final_translation': 'They ate the apples.'}"])
        .build()
        .unwrap()
}

#[tokio::test]
async fn converged_first_round() {
    let backend = Arc::new(converge_once());
    let result = run_pipeline(task(), RunConfig::default(), backend.clone()).await.unwrap();
    assert_eq!(result.iterations_used, 1);
    assert_eq!(result.termination_reason, TerminationReason::Converged);
    assert_eq!(result.stages(), [Stage::Draft, Stage::Back, Stage::Judge, Stage::Extract]);
    assert_eq!(result.final_translation, "They ate apples.");
    assert_eq!(backend.calls(), result.transcript.len());
    assert_eq!(backend.remaining(), 0);
    assert!(!result.fallback_used);
}

#[tokio::test]
async fn iteration_cap_reached() {
    let backend = Arc::new(always_continue(3));
    let result = run_pipeline(task(), RunConfig::default(), backend.clone()).await.unwrap();
    assert_eq!(result.termination_reason, TerminationReason::IterationCapReached);
    assert_eq!(result.iterations_used, 3);
    let stages = result.stages();
    let count = |s| stages.iter().filter(|&&x| x == s).count();
    assert_eq!(count(Stage::Judge), 3);
    assert_eq!(count(Stage::Reflect), 2);
    assert_eq!(count(Stage::Revise), 2);
    assert_eq!(count(Stage::Extract), 1);
    assert_eq!(*stages.last().unwrap(), Stage::Extract);
    assert!(is_valid_stage_order(&stages, false));
    assert!(stages.len() as u32 <= RunConfig::default().call_bound(Mode::DualReflect));
    assert_eq!(result.final_translation, "They ate the apples.");
    assert_eq!(backend.calls(), result.transcript.len());

    // the final extraction works on the latest revision
    let last = result.transcript.last().unwrap();
    assert!(last.rendered_prompt.last_user().contains("(v2)"));
}

#[tokio::test]
async fn empty_source_makes_no_calls() {
    let backend = Arc::new(converge_once());
    let mut t = task();
    t.source_text = "   ".into();
    let err = run_pipeline(t, RunConfig::default(), backend.clone()).await.unwrap_err();
    assert!(matches!(err.error, PipelineError::InvalidTask(_)));
    assert!(err.transcript.is_empty());
    assert_eq!(backend.calls(), 0);
}

#[tokio::test]
async fn zero_shot_is_draft_plus_extract() {
    let backend = Arc::new(
        ScriptedBackend::builder()
            .contains("Translate the following", ["Bonjour"])
            .stage(Stage::Extract, [r#"{"final_translation": "Bonjour"}"#])
            .build()
            .unwrap(),
    );
    let t = TranslationTask::new("z", "Hello", "English", "French");
    let result = run_zero_shot(t, RunConfig::default(), backend).await.unwrap();
    assert_eq!(result.stages(), [Stage::Draft, Stage::Extract]);
    assert_eq!(result.final_translation, "Bonjour");
    assert_eq!(result.iterations_used, 0);
    assert_eq!(result.termination_reason, TerminationReason::Converged);
}

#[tokio::test]
async fn unreachable_backend_records_failed_draft() {
    let backend = HttpBackend::new(HttpConfig {
        base_url: "http://127.0.0.1:9/v1".into(),
        api_key: None,
        timeout: Duration::from_secs(2),
        retry: RetryPolicy::no_retry(),
    })
    .unwrap();
    let err = run_zero_shot(task(), RunConfig::default(), Arc::new(backend))
        .await
        .unwrap_err();
    assert!(err.error.is_backend_failure(), "{}", err.error);
    assert_eq!(err.transcript.len(), 1);
    let entry = &err.transcript[0];
    assert_eq!(entry.stage, Stage::Draft);
    assert_eq!(entry.raw_output, "");
    assert!(entry.error.is_some());
}

#[tokio::test]
async fn stepping_by_hand() {
    let pipeline = Pipeline::new(Arc::new(converge_once()), RunConfig::default()).unwrap();
    let mut rec = Recorder::for_task(&task());
    let state = pipeline.start(task(), Mode::DualReflect).unwrap();
    assert_eq!(state.next_stage(), Some(Stage::Draft));

    let state = pipeline.step(state, &mut rec).await.unwrap();
    assert_eq!(state.draft.as_deref(), Some("They ate apples."));
    assert!(state.back_translation.is_none());

    let state = pipeline.step(state, &mut rec).await.unwrap();
    assert_eq!(state.iteration, 0);
    let state = pipeline.step(state, &mut rec).await.unwrap();
    assert_eq!(state.iteration, 1);
    assert_eq!(state.last_judgment, Some(JudgmentResult::Converged));
    assert!(!state.terminated);
    assert!(state.final_translation.is_none());

    let state = pipeline.step(state, &mut rec).await.unwrap();
    assert!(state.terminated);
    assert_eq!(state.final_translation.as_deref(), Some("They ate apples."));
    assert_eq!(state.next_stage(), None);
    assert_eq!(rec.entries().len(), 4);

    let err = pipeline.step(state, &mut rec).await.unwrap_err();
    assert!(matches!(err, PipelineError::IllegalState(_)));
    assert_eq!(rec.entries().len(), 4);
}

#[tokio::test]
async fn reflection_outputs_replace_each_round() {
    let backend = ScriptedBackend::builder()
        .stage(Stage::Draft, ["d0"])
        .stage(Stage::Back, ["b1", "b2", "b3"])
        .stage(Stage::Judge, ["True, 1", "True, 2", "False"])
        .stage(
            Stage::Reflect,
            [
                "Analysis Results: FIRST-AR\nTranslation Suggestions: FIRST-TS",
                "Analysis Results: SECOND-AR\nTranslation Suggestions: SECOND-TS",
            ],
        )
        .stage(Stage::Revise, ["d1", "d2"])
        .stage(Stage::Extract, [r#"{"final_translation": "d2"}"#])
        .build()
        .unwrap();
    let result = run_pipeline(task(), RunConfig::default(), Arc::new(backend)).await.unwrap();
    assert_eq!(result.termination_reason, TerminationReason::Converged);
    assert_eq!(result.iterations_used, 3);
    let revisions: Vec<_> = result
        .transcript
        .iter()
        .filter(|e| e.stage == Stage::Revise)
        .collect();
    let second = revisions[1].rendered_prompt.last_user();
    assert!(second.contains("SECOND-AR") && second.contains("SECOND-TS"));
    assert!(!second.contains("FIRST-AR"));

    // each back-translation works on the newest draft
    let backs: Vec<_> = result
        .transcript
        .iter()
        .filter(|e| e.stage == Stage::Back)
        .map(|e| e.rendered_prompt.last_user().to_string())
        .collect();
    assert!(backs[0].contains("d0") && backs[1].contains("d1") && backs[2].contains("d2"));
    let iterations: Vec<u32> = result.transcript.iter().map(|e| e.iteration).collect();
    assert_eq!(iterations, [0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3]);
}

#[tokio::test]
async fn unparseable_extraction_falls_back_to_draft() {
    let backend = || {
        ScriptedBackend::builder()
            .stage(Stage::Draft, ["Guten Morgen"])
            .stage(Stage::Extract, ["I'm sorry, here it is: Guten Morgen"])
            .build()
            .unwrap()
    };
    let t = TranslationTask::new("f", "Good morning", "English", "German");
    let result = run_zero_shot(t.clone(), RunConfig::default(), Arc::new(backend()))
        .await
        .unwrap();
    assert!(result.fallback_used);
    assert_eq!(result.final_translation, "Guten Morgen");
    assert_eq!(result.transcript[1].warnings.len(), 1);

    let strict = RunConfig {
        strict_extraction: true,
        ..RunConfig::default()
    };
    let err = run_zero_shot(t, strict, Arc::new(backend())).await.unwrap_err();
    match err.error {
        PipelineError::ExtractionFailed { raw } => assert!(raw.contains("I'm sorry")),
        other => panic!("unexpected {other}"),
    }
    assert_eq!(err.transcript.len(), 2);
    assert!(err.transcript[1].error.is_some());
}

#[tokio::test]
async fn garbage_judgment_keeps_looping() {
    let backend = ScriptedBackend::builder()
        .stage(Stage::Draft, ["d0"])
        .stage(Stage::Back, ["b1", "b2"])
        .stage(Stage::Judge, ["Hmm, hard to say.", "false"])
        .stage(Stage::Reflect, ["merged analysis"])
        .stage(Stage::Revise, ["d1"])
        .stage(Stage::Extract, [r#"{"final_translation": "d1"}"#])
        .build()
        .unwrap();
    let result = run_pipeline(task(), RunConfig::default(), Arc::new(backend)).await.unwrap();
    assert_eq!(result.iterations_used, 2);
    let judge = result.transcript.iter().find(|e| e.stage == Stage::Judge).unwrap();
    assert_eq!(judge.warnings.len(), 1);
    assert_eq!(judge.parsed_summary.as_deref(), Some("continue"));
    let revise = result.transcript.iter().find(|e| e.stage == Stage::Revise).unwrap();
    assert!(revise.rendered_prompt.last_user().contains("merged analysis"));
}

#[tokio::test]
async fn forced_extraction_records_each_round() {
    let config = RunConfig {
        force_extraction_each_iteration: true,
        ..RunConfig::default()
    };
    let backend = ScriptedBackend::builder()
        .stage(Stage::Draft, ["d0"])
        .stage(Stage::Back, ["b"; 3])
        .stage(Stage::Judge, ["True, differs"; 3])
        .stage(Stage::Reflect, ["a"; 2])
        .stage(Stage::Revise, ["d1", "d2"])
        .stage(
            Stage::Extract,
            [
                r#"{"final_translation": "d1"}"#,
                r#"{"final_translation": "d2"}"#,
                r#"{"final_translation": "d2 final"}"#,
            ],
        )
        .build()
        .unwrap();
    let result = run_pipeline(task(), config.clone(), Arc::new(backend)).await.unwrap();
    let stages = result.stages();
    assert!(is_valid_stage_order(&stages, true));
    assert!(!is_valid_stage_order(&stages, false));
    assert!(stages.len() as u32 <= config.call_bound(Mode::DualReflect));
    let finals: Vec<_> = result
        .intermediate_finals
        .iter()
        .map(|f| (f.iteration, f.translation.as_str()))
        .collect();
    assert_eq!(finals, [(1, "d1"), (2, "d2")]);
    assert_eq!(result.final_translation, "d2 final");
    let extract_iters: Vec<u32> = result
        .transcript
        .iter()
        .filter(|e| e.stage == Stage::Extract)
        .map(|e| e.iteration)
        .collect();
    assert_eq!(extract_iters, [1, 2, 3]);
}

#[tokio::test]
async fn replay_is_deterministic() {
    let a = run_pipeline(task(), RunConfig::default(), Arc::new(always_continue(3))).await.unwrap();
    let b = run_pipeline(task(), RunConfig::default(), Arc::new(always_continue(3))).await.unwrap();
    assert_eq!(a.final_translation, b.final_translation);
    assert_eq!(canonical_transcript(&a.transcript), canonical_transcript(&b.transcript));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_runs_share_one_backend() {
    let mut builder = ScriptedBackend::builder();
    for i in 0..20 {
        builder = builder
            .stage_contains(Stage::Draft, format!("source {i}."), [format!("draft {i}.")])
            .stage_contains(Stage::Back, format!("draft {i}."), [format!("source {i}.")])
            .stage_contains(Stage::Judge, format!("source {i}."), ["False"])
            .stage_contains(
                Stage::Extract,
                format!("draft {i}."),
                [format!("{{\"final_translation\": \"draft {i}.\"}}")],
            );
    }
    let backend = Arc::new(builder.build().unwrap());
    let sink = Arc::new(MemorySink::new());
    let pipeline = Arc::new(Pipeline::new(backend.clone(), RunConfig::default()).unwrap());

    let mut handles = Vec::new();
    for i in 0..20 {
        let pipeline = pipeline.clone();
        let sink = sink.clone();
        handles.push(tokio::spawn(async move {
            let t = TranslationTask::new(format!("t{i}"), format!("source {i}."), "German", "English");
            let rec = Recorder::for_task(&t).with_sink(sink);
            pipeline.run(t, rec).await
        }));
    }
    for (i, h) in handles.into_iter().enumerate() {
        let result = h.await.unwrap().unwrap();
        assert_eq!(result.final_translation, format!("draft {i}."));
        assert_eq!(sink.run(&format!("t{i}")).unwrap().len(), 4);
    }
    assert_eq!(backend.calls(), 80);
}

#[tokio::test]
async fn empty_draft_is_an_error() {
    let backend = ScriptedBackend::builder()
        .stage(Stage::Draft, ["   "])
        .build()
        .unwrap();
    let err = run_pipeline(task(), RunConfig::default(), Arc::new(backend))
        .await
        .unwrap_err();
    assert!(matches!(err.error, PipelineError::EmptyOutput { stage: Stage::Draft }));
    assert_eq!(err.transcript.len(), 1);
}
