use std::sync::Arc;

use serde_json::{json, Value};
use songsmith::gan::ModelConfig;
use songsmith::lyrics::SkipGramConfig;
use songsmith::recommend::Recommender;
use songsmith::train::{initial_checkpoint, nursery_corpus, TrainConfig};

fn tiny_config() -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            cond_dim: 20,
            noise_dim: 4,
            hidden: 8,
            layers: 1,
            disc_hidden: 8,
            posterior_hidden: 4,
        },
        embedding: SkipGramConfig {
            epochs: 2,
            ..SkipGramConfig::default()
        },
        ..TrainConfig::default()
    }
}

async fn start() -> (String, Arc<Recommender>) {
    let ckpt = initial_checkpoint(&nursery_corpus(), &tiny_config()).unwrap();
    let svc = Arc::new(Recommender::new(ckpt));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(songsmith_server::serve(listener, svc.clone()));
    (base, svc)
}

#[tokio::test(flavor = "multi_thread")]
async fn generate_recompose_and_fetch() {
    let (base, svc) = start().await;
    let http = reqwest::Client::new();

    let health: Value = http
        .get(format!("{base}/api/health"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(health, json!({"status": "ok", "model": svc.fingerprint()}));

    let res = http
        .post(format!("{base}/api/generate"))
        .json(&json!({"lyrics": "twinkle twinkle little star", "seed": 7, "k": 3}))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), 200);
    let gen: Value = res.json().await.unwrap();
    let id = gen["result_id"].as_str().unwrap().to_string();
    let steps = gen["score"]["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 7);
    assert_eq!(gen["candidates"].as_array().unwrap().len(), 7);
    assert_eq!(gen["candidates"][0]["pitch"].as_array().unwrap().len(), 3);
    assert_eq!(gen["seed"], 7);

    let second = gen["candidates"][0]["pitch"][1]["value"].as_f64().unwrap();
    let res = http
        .post(format!("{base}/api/recompose"))
        .json(&json!({"result_id": id, "overrides": [{"step": 0, "attribute": "pitch", "value": second}]}))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), 200);
    let rec: Value = res.json().await.unwrap();
    let rid = rec["result_id"].as_str().unwrap();
    assert_ne!(rid, id);
    assert_eq!(rec["score"]["steps"][0]["pitch"].as_f64().unwrap(), second);
    assert_eq!(rec["score"]["steps"].as_array().unwrap()[1..], steps[1..]);
    assert_eq!(rec["candidates"], gen["candidates"]);
    assert_eq!(
        rec["score"]["overrides"],
        json!([{"step": 0, "attribute": "pitch", "value": second}])
    );

    let res = http.get(format!("{base}/api/score/{rid}/midi")).send().await.unwrap();
    assert_eq!(res.status(), 200);
    assert_eq!(res.headers()["content-type"], "audio/midi");
    let bytes = res.bytes().await.unwrap();
    assert_eq!(&bytes[..4], b"MThd");
    let again = http
        .get(format!("{base}/api/score/{rid}/midi"))
        .send()
        .await
        .unwrap()
        .bytes()
        .await
        .unwrap();
    assert_eq!(bytes, again);
    let parsed = songsmith::score::score_from_midi(&songsmith::score::read_midi(&bytes).unwrap()).unwrap();
    assert_eq!(parsed, svc.get(rid).unwrap().score);

    let res = http.get(format!("{base}/api/score/{id}")).send().await.unwrap();
    assert_eq!(res.status(), 200);
    let text = res.text().await.unwrap();
    assert_eq!(text, songsmith::score::score_to_json(&svc.get(&id).unwrap().score));
    let parent: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(parent, gen["score"]);
}

async fn expect_error(res: reqwest::Response, status: u16) -> String {
    assert_eq!(res.status(), status);
    let body: Value = res.json().await.unwrap();
    let obj = body.as_object().unwrap();
    assert_eq!(obj.len(), 1, "{body}");
    obj["error"].as_str().unwrap().to_string()
}

#[tokio::test(flavor = "multi_thread")]
async fn error_paths_use_the_json_shape() {
    let (base, _) = start().await;
    let http = reqwest::Client::new();

    let res = http
        .post(format!("{base}/api/generate"))
        .json(&json!({"lyrics": "!!! 123"}))
        .send()
        .await
        .unwrap();
    assert!(expect_error(res, 400).await.contains("tokenization"));

    let res = http
        .post(format!("{base}/api/generate"))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    expect_error(res, 400).await;

    let res = http
        .post(format!("{base}/api/recompose"))
        .json(&json!({"result_id": "r999-00000000", "overrides": []}))
        .send()
        .await
        .unwrap();
    assert!(expect_error(res, 404).await.contains("r999-00000000"));

    let gen: Value = http
        .post(format!("{base}/api/generate"))
        .json(&json!({"lyrics": "la la"}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(gen["k"], 5);
    let id = gen["result_id"].as_str().unwrap();
    let res = http
        .post(format!("{base}/api/recompose"))
        .json(&json!({"result_id": id, "overrides": [{"step": 5, "attribute": "rest", "value": 0.0}]}))
        .send()
        .await
        .unwrap();
    assert!(expect_error(res, 400).await.contains("step 5"));
    let res = http
        .post(format!("{base}/api/recompose"))
        .json(&json!({"result_id": id, "overrides": [{"step": 0, "attribute": "pitch", "value": 20.0}]}))
        .send()
        .await
        .unwrap();
    assert!(expect_error(res, 400).await.contains("pitch value 20"));

    for path in ["/api/score/nope", "/api/score/nope/midi"] {
        let res = http.get(format!("{base}{path}")).send().await.unwrap();
        expect_error(res, 404).await;
    }
}
