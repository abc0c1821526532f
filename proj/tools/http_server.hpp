#pragma once

#include "ckc/service.hpp"

namespace httplib {
class Server;
}

namespace ckc::cli {

// Forwards every request to the service. The Idempotency-Key header is
// passed through.
void install_routes(httplib::Server& server, ChatService& service);

}  // namespace ckc::cli
