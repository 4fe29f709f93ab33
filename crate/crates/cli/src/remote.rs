//! Commands that run or talk to the server.

use anyhow::{Context, Result};
use floorspace_client::ApiClient;
use floorspace_server::{ConfigOverrides, ServerConfig};

use crate::ServeArgs;

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Runtime::new().context("cannot start the async runtime")
}

pub fn serve(a: ServeArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => ServerConfig::load(path)?,
        None => ServerConfig::default(),
    };
    cfg.apply(&ConfigOverrides {
        address: a.address,
        port: a.port,
        audio_port: a.audio_port,
        control_port: a.control_port,
        model: a.model,
        normal_gain: a.normal_gain,
        quiet_gain: a.quiet_gain,
        eval_period_ms: a.eval_period_ms,
        max_participants: a.max_participants,
    });
    cfg.validate()?;
    runtime()?.block_on(floorspace_server::serve(cfg, async {
        let _ = tokio::signal::ctrl_c().await;
    }))?;
    Ok(())
}

pub fn status(server: &str) -> Result<()> {
    let api = ApiClient::new(server);
    let (status, config) = runtime()?.block_on(async { Ok::<_, anyhow::Error>((api.status().await?, api.configuration().await?)) })?;
    println!("{}", serde_json::to_string_pretty(&status)?);
    match config {
        Some(c) => println!(
            "configuration: {}  score {:.4}{}",
            c.floors.iter().map(|f| format!("{{{}}}", f.join(","))).collect::<String>(),
            c.score,
            if c.pinned { "  (pinned)" } else { "" }
        ),
        None => println!("configuration: none yet"),
    }
    Ok(())
}

pub fn events(server: &str, since: usize) -> Result<()> {
    let page = runtime()?.block_on(ApiClient::new(server).events(since))?;
    for e in &page.events {
        let floors: String = e.floors.iter().map(|f| format!("{{{}}}", f.join(","))).collect();
        println!("{:>10} ms  {floors}  score {:.4}", e.tick, e.score);
    }
    println!("next: {}", page.next);
    Ok(())
}

pub fn pin(server: &str, owner: &str, floors: &[String]) -> Result<()> {
    let floors: Vec<Vec<String>> = floors
        .iter()
        .map(|f| f.split(',').map(|n| n.trim().to_string()).filter(|n| !n.is_empty()).collect())
        .collect();
    runtime()?.block_on(ApiClient::new(server).pin(owner, floors))?;
    println!("pinned by {owner}");
    Ok(())
}

pub fn unpin(server: &str, owner: &str) -> Result<()> {
    runtime()?.block_on(ApiClient::new(server).unpin(owner))?;
    println!("unpinned");
    Ok(())
}
