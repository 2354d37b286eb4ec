import { ServiceClient } from "./api.js";
import { App } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("service") ?? "http://127.0.0.1:8000";

const mount = document.getElementById("app");
if (!mount) throw new Error("missing #app mount point");
new App(new ServiceClient(base), mount);
