// SPDX-License-Identifier: Apache-2.0

#[tokio::main]
async fn main() {
    let code = acp_simcli::cli::main_with(std::env::args_os(), &mut std::io::stdout().lock()).await;
    std::process::exit(code);
}
