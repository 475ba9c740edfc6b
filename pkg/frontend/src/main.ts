import { ApiClient } from "./api.js";
import { createWallet } from "./ui.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");
createWallet(root, new ApiClient(""));
