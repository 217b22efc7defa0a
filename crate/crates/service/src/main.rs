use clap::Parser;

use sectrain_service::{router, spawn_party_listener, AppState};

#[derive(Parser)]
#[command(name = "sectrain-service", about = "Experiment service and party server")]
struct Args {
    /// HTTP listen address.
    #[arg(long, default_value = "127.0.0.1:8080")]
    http: String,
    /// TCP address for party sessions; disabled when absent.
    #[arg(long)]
    party: Option<String>,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    tracing_subscriber::fmt().with_target(false).init();
    let args = Args::parse();
    if let Some(addr) = &args.party {
        let (local, _) = spawn_party_listener(addr)?;
        tracing::info!(%local, "party server listening");
    }
    let listener = tokio::net::TcpListener::bind(&args.http).await?;
    tracing::info!(addr = %listener.local_addr()?, "http listening");
    axum::serve(listener, router(AppState::default()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
