import { ApiClient } from "./api.js";
import { buildStudio } from "./panels.js";
async function boot() {
    const root = document.getElementById("app");
    if (!root)
        throw new Error("missing #app mount point");
    const api = new ApiClient("");
    const { presets, ranges } = await api.presets();
    buildStudio(root, api, ranges, presets);
}
boot().catch((err) => {
    const root = document.getElementById("app");
    if (root)
        root.textContent = `failed to start: ${String(err)}`;
});
