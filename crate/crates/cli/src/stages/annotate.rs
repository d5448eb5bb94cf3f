use qaforge_core::corpus::{Document, Question};
use qaforge_service::{AppState, ServiceConfig, Store};
use serde_json::json;

use super::{read, write, Ctx, HINT_DOCUMENTS, HINT_QUESTIONS};
use crate::cli::{ExportArgs, ServeArgs};
use crate::error::{require, Classify, StageResult};

fn service_config(ctx: &Ctx) -> ServiceConfig {
    let mut cfg = ctx.config().service.clone();
    cfg.store_path = ctx.path(&cfg.store_path);
    cfg.consent_file = cfg.consent_file.map(|p| ctx.path(&p));
    cfg.static_dir = cfg.static_dir.map(|p| ctx.path(&p));
    cfg
}

/// Loads approved questions into the store and serves until interrupted.
pub fn serve(ctx: &Ctx, args: ServeArgs) -> StageResult<()> {
    let mut cfg = service_config(ctx);
    if let Some(bind) = args.bind {
        cfg.bind = bind;
    }
    let paths = &ctx.config().paths;
    let documents: Vec<Document> = read("serve", &ctx.path(&paths.documents), HINT_DOCUMENTS)?;
    let questions: Vec<Question> = read("serve", &ctx.path(&paths.questions), HINT_QUESTIONS)?;
    if let Some(parent) = cfg.store_path.parent() {
        std::fs::create_dir_all(parent).data()?;
    }
    let store = Store::open(&cfg.store_path).upstream()?;
    let added = store.import(&documents, &questions).upstream()?;
    log::info!("{added} questions available for annotation");
    let state = AppState::new(store, &cfg).data()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .upstream()?;
    runtime.block_on(qaforge_service::serve(&cfg, state)).upstream()
}

pub fn export(ctx: &Ctx, args: ExportArgs) -> StageResult<()> {
    let cfg = service_config(ctx);
    require("export", &cfg.store_path, "run serve first")?;
    let store = Store::open(&cfg.store_path).upstream()?;
    let records = store.export().upstream()?;
    let out = ctx.pick(&args.out, &ctx.config().paths.annotations);
    write(&out, &records)?;
    let surplus = records.iter().filter(|r| r.surplus).count();
    println!(
        "exported {} annotations ({surplus} surplus) to {}",
        records.len(),
        out.display()
    );

    let mut m = ctx.manifest("export", json!({}));
    m.input("store", &cfg.store_path).data()?;
    m.output("annotations", &out).data()?;
    m.write().data()?;
    Ok(())
}
